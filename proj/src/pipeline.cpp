// SPDX-License-Identifier: Apache-2.0

#include "hzp/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace hzp {

PipeVariant parse_variant(const std::string& name) {
  if (name == "1f1b") return PipeVariant::OneFOneB;
  if (name == "interleaved") return PipeVariant::Interleaved;
  throw PipeError(PipeError::Code::UnsupportedVariant,
                  "unsupported pipeline variant: " + name);
}

namespace {

std::vector<ScheduleSlot> schedule_1f1b(int pp, int m, int rank) {
  std::vector<ScheduleSlot> slots;
  const int warmup = std::min(pp - rank - 1, m);
  int next_f = 0, next_b = 0;
  for (int i = 0; i < warmup; ++i) slots.push_back({Pass::Forward, next_f++, 0});
  while (next_f < m) {
    slots.push_back({Pass::Forward, next_f++, 0});
    slots.push_back({Pass::Backward, next_b++, 0});
  }
  while (next_b < m) slots.push_back({Pass::Backward, next_b++, 0});
  return slots;
}

std::vector<ScheduleSlot> schedule_interleaved(int pp, int vpp, int m,
                                               int rank) {
  // Microbatches are processed in groups of pp; the i-th forward unit runs
  // virtual stage (i/pp) % vpp on microbatch (i/(pp*vpp))*pp + i%pp.
  // Backward units mirror the virtual-stage order.
  const int total = m * vpp;
  auto f_slot = [&](int i) {
    return ScheduleSlot{Pass::Forward, (i / (pp * vpp)) * pp + i % pp,
                        (i / pp) % vpp};
  };
  auto b_slot = [&](int j) {
    return ScheduleSlot{Pass::Backward, (j / (pp * vpp)) * pp + j % pp,
                        vpp - 1 - (j / pp) % vpp};
  };
  const int warmup = std::min((pp - rank - 1) * 2 + (vpp - 1) * pp, total);
  std::vector<ScheduleSlot> slots;
  int next_f = 0, next_b = 0;
  for (; next_f < warmup; ++next_f) slots.push_back(f_slot(next_f));
  while (next_f < total) {
    slots.push_back(f_slot(next_f++));
    slots.push_back(b_slot(next_b++));
  }
  while (next_b < total) slots.push_back(b_slot(next_b++));
  return slots;
}

std::vector<Phase> label_phases(const std::vector<ScheduleSlot>& slots) {
  std::vector<Phase> phases(slots.size(), Phase::Steady);
  std::size_t i = 0;
  while (i < slots.size() && slots[i].pass == Pass::Forward) {
    phases[i] = Phase::Warmup;
    ++i;
  }
  std::size_t j = slots.size();
  while (j > i && slots[j - 1].pass == Pass::Backward) {
    phases[j - 1] = Phase::Cooldown;
    --j;
  }
  return phases;
}

}  // namespace

PipeSchedule build_schedule(int pp, int vpp, int microbatches,
                            PipeVariant variant) {
  if (pp < 1 || vpp < 1 || microbatches < 1) {
    throw PipeError(PipeError::Code::BadShape, "degrees must be >= 1");
  }
  if (vpp > 1 && variant != PipeVariant::Interleaved) {
    throw PipeError(PipeError::Code::BadShape,
                    "vpp > 1 requires the interleaved variant");
  }
  if (variant == PipeVariant::Interleaved && vpp > 1 &&
      microbatches % pp != 0) {
    throw PipeError(PipeError::Code::BadShape,
                    "interleaved schedule needs microbatches divisible by pp");
  }
  PipeSchedule sched;
  sched.pp = pp;
  sched.vpp = vpp;
  sched.microbatches = microbatches;
  sched.variant = variant;
  for (int rank = 0; rank < pp; ++rank) {
    auto slots = (variant == PipeVariant::Interleaved && vpp > 1)
                     ? schedule_interleaved(pp, vpp, microbatches, rank)
                     : schedule_1f1b(pp, microbatches, rank);
    sched.phases.push_back(label_phases(slots));
    sched.per_rank.push_back(std::move(slots));
  }
  return sched;
}

namespace {

// Rebuild the task list without the tasks in `dropped`, remapping every
// dependency through `redirect` (applied transitively) and renumbering ids.
void compact_graph(TaskGraph& graph, const std::set<int>& dropped,
                   std::map<int, int>& redirect) {
  auto resolve = [&redirect](int id) {
    while (true) {
      auto it = redirect.find(id);
      if (it == redirect.end()) return id;
      id = it->second;
    }
  };
  std::vector<int> new_id(graph.tasks.size(), -1);
  std::vector<Task> kept;
  for (const auto& t : graph.tasks) {
    if (dropped.count(t.id)) continue;
    new_id[t.id] = static_cast<int>(kept.size());
    kept.push_back(t);
  }
  for (auto& t : kept) {
    std::vector<int> deps;
    for (int d : t.deps) {
      const int target = new_id[resolve(d)];
      if (target >= 0 &&
          std::find(deps.begin(), deps.end(), target) == deps.end()) {
        deps.push_back(target);
      }
    }
    t.deps = std::move(deps);
    t.id = new_id[t.id];
  }
  graph.tasks = std::move(kept);
}

std::vector<ScheduleSlot> slots_of_graph(const TaskGraph& graph) {
  std::vector<ScheduleSlot> slots;
  for (const auto& t : graph.tasks) {
    if (t.kind != TaskKind::Fwd && t.kind != TaskKind::Bwd) continue;
    const ScheduleSlot slot{t.pass, t.microbatch, t.virtual_stage};
    if (slots.empty() || slots.back().pass != slot.pass ||
        slots.back().microbatch != slot.microbatch ||
        slots.back().virtual_stage != slot.virtual_stage) {
      slots.push_back(slot);
    }
  }
  return slots;
}

bool same_slot(const ScheduleSlot& a, const ScheduleSlot& b) {
  return a.pass == b.pass && a.microbatch == b.microbatch &&
         a.virtual_stage == b.virtual_stage;
}

bool same_pass_pair(const ScheduleSlot& a, const ScheduleSlot& b) {
  return a.pass == b.pass && a.virtual_stage == b.virtual_stage;
}

}  // namespace

ReuseReport apply_reuse(const PipeSchedule& schedule, TaskGraph& graph) {
  if (graph.rank < 0 || graph.rank >= static_cast<int>(schedule.per_rank.size())) {
    throw PipeError(PipeError::Code::ScheduleGraphMismatch,
                    "graph rank outside schedule");
  }
  const auto& slots = schedule.per_rank[graph.rank];
  const auto graph_slots = slots_of_graph(graph);
  if (graph_slots.size() != slots.size() ||
      !std::equal(graph_slots.begin(), graph_slots.end(), slots.begin(),
                  same_slot)) {
    throw PipeError(PipeError::Code::ScheduleGraphMismatch,
                    "task graph was not built for this schedule");
  }

  // Index AG and RS tasks by (pass, microbatch, vstage, layer).
  std::map<std::tuple<int, int, int, int>, int> ag_by_key;
  std::map<std::tuple<int, int, int>, int> rs_by_key;  // (mb, vstage, layer)
  for (const auto& t : graph.tasks) {
    if (t.kind == TaskKind::AgParam) {
      ag_by_key[{static_cast<int>(t.pass), t.microbatch, t.virtual_stage,
                 t.layer}] = t.id;
    } else if (t.kind == TaskKind::RsGrad) {
      rs_by_key[{t.microbatch, t.virtual_stage, t.layer}] = t.id;
    }
  }
  auto layers_of = [&](const ScheduleSlot& slot) {
    std::vector<int> layers;
    for (const auto& t : graph.tasks) {
      if (t.kind == (slot.pass == Pass::Forward ? TaskKind::Fwd : TaskKind::Bwd) &&
          t.microbatch == slot.microbatch &&
          t.virtual_stage == slot.virtual_stage) {
        layers.push_back(t.layer);
      }
    }
    return layers;
  };

  ReuseReport report;
  std::set<int> dropped;
  std::map<int, int> redirect;

  auto eliminate_ag = [&](const ScheduleSlot& from, const ScheduleSlot& to,
                          int& counter) {
    for (int layer : layers_of(to)) {
      const int victim = ag_by_key.at({static_cast<int>(to.pass), to.microbatch,
                                       to.virtual_stage, layer});
      const int keeper = ag_by_key.at({static_cast<int>(from.pass),
                                       from.microbatch, from.virtual_stage,
                                       layer});
      if (dropped.insert(victim).second) {
        redirect[victim] = keeper;
        ++counter;
      }
    }
  };

  const std::size_t n = slots.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (same_pass_pair(slots[i], slots[i + 1])) {
      eliminate_ag(slots[i], slots[i + 1], report.r1_eliminated_ag);
    }
  }
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (slots[i].pass == Pass::Forward && slots[i + 1].pass == Pass::Backward &&
        slots[i + 2].pass == Pass::Forward &&
        slots[i].virtual_stage == slots[i + 2].virtual_stage) {
      const std::size_t before = dropped.size();
      eliminate_ag(slots[i], slots[i + 2], report.r3_eliminated_ag);
      if (dropped.size() > before) {
        report.extra_cached_bytes +=
            static_cast<std::int64_t>(layers_of(slots[i + 2]).size()) *
            graph.ag_slot_bytes;
      }
    }
  }

  // R2: runs of adjacent backward slots on the same virtual stage merge their
  // reduce-scatters into the last one, with accumulated gradients.
  std::size_t i = 0;
  while (i < n) {
    if (slots[i].pass != Pass::Backward) { ++i; continue; }
    std::size_t j = i;
    while (j + 1 < n && slots[j + 1].pass == Pass::Backward &&
           slots[j + 1].virtual_stage == slots[i].virtual_stage) {
      ++j;
    }
    if (j > i) {
      for (int layer : layers_of(slots[j])) {
        const int keeper = rs_by_key.at({slots[j].microbatch,
                                         slots[j].virtual_stage, layer});
        for (std::size_t k = i; k < j; ++k) {
          const int victim = rs_by_key.at({slots[k].microbatch,
                                           slots[k].virtual_stage, layer});
          if (dropped.insert(victim).second) {
            redirect[victim] = keeper;
            ++report.r2_merged_rs;
            // The merged reduce-scatter covers this backward's gradients too.
            for (int d : graph.tasks[victim].deps) {
              auto& kdeps = graph.tasks[keeper].deps;
              if (std::find(kdeps.begin(), kdeps.end(), d) == kdeps.end()) {
                kdeps.push_back(d);
              }
            }
          }
        }
      }
    }
    i = j + 1;
  }

  compact_graph(graph, dropped, redirect);
  return report;
}

void recompute_rule(TaskGraph& graph, bool recompute) {
  if (!recompute) return;
  std::vector<Task> rebuilt;
  std::vector<int> new_id(graph.tasks.size(), -1);
  std::map<int, double> fwd_duration;  // by layer
  for (const auto& t : graph.tasks) {
    if (t.kind == TaskKind::Fwd) fwd_duration[t.layer] = t.duration;
  }
  for (const auto& t : graph.tasks) {
    Task copy = t;
    for (int& d : copy.deps) d = new_id[d];
    if (t.kind == TaskKind::Bwd) {
      Task rec;
      rec.id = static_cast<int>(rebuilt.size());
      rec.kind = TaskKind::FwdRecompute;
      rec.layer = t.layer;
      rec.microbatch = t.microbatch;
      rec.virtual_stage = t.virtual_stage;
      rec.pass = Pass::Backward;
      rec.duration = fwd_duration.count(t.layer) ? fwd_duration[t.layer]
                                                 : t.duration / 2.0;
      rec.deps = copy.deps;
      rebuilt.push_back(rec);
      // The backward keeps its all-gather dependency (the gathered
      // parameters feed both passes) and now follows the recompute.
      std::vector<int> deps;
      for (int d : copy.deps) {
        if (rebuilt[d].kind == TaskKind::AgParam) deps.push_back(d);
      }
      deps.push_back(rec.id);
      copy.deps = std::move(deps);
    }
    copy.id = static_cast<int>(rebuilt.size());
    new_id[t.id] = copy.id;
    rebuilt.push_back(std::move(copy));
  }
  graph.tasks = std::move(rebuilt);
}

}  // namespace hzp
