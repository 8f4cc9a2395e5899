// SPDX-License-Identifier: Apache-2.0

#include "hzp/sched.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

namespace hzp {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Fwd: return "FWD";
    case TaskKind::Bwd: return "BWD";
    case TaskKind::FwdRecompute: return "FWD-recompute";
    case TaskKind::AgParam: return "AG-param";
    case TaskKind::RsGrad: return "RS-grad";
    case TaskKind::ArDzp: return "AR-dzp";
    case TaskKind::OptStep: return "OPT-step";
    case TaskKind::AgPostStep: return "AG-post-step";
  }
  return "?";
}

int TaskGraph::count(TaskKind kind) const {
  int n = 0;
  for (const auto& t : tasks) {
    if (t.kind == kind) ++n;
  }
  return n;
}

namespace {

StreamId stream_of(TaskKind kind) {
  switch (kind) {
    case TaskKind::Fwd:
    case TaskKind::Bwd:
    case TaskKind::FwdRecompute:
    case TaskKind::OptStep:
      return StreamId::Compute;
    case TaskKind::AgParam:
    case TaskKind::AgPostStep:
      return StreamId::Ag;
    case TaskKind::RsGrad:
    case TaskKind::ArDzp:
      return StreamId::Rs;
  }
  return StreamId::Compute;
}

bool is_comm(TaskKind kind) {
  return kind == TaskKind::AgParam || kind == TaskKind::RsGrad ||
         kind == TaskKind::ArDzp || kind == TaskKind::AgPostStep;
}

bool uses_ag_pool(TaskKind kind) {
  return kind == TaskKind::AgParam || kind == TaskKind::AgPostStep;
}

std::vector<int> chunk_layers(const ModelSpec& spec, const ParallelConfig& cfg,
                              int rank, int vstage) {
  const int chunks = cfg.pp * cfg.vpp;
  const std::int64_t per_chunk = spec.num_layers / chunks;
  const std::int64_t chunk_index = static_cast<std::int64_t>(vstage) * cfg.pp + rank;
  std::vector<int> layers;
  for (std::int64_t l = chunk_index * per_chunk; l < (chunk_index + 1) * per_chunk; ++l)
    layers.push_back(static_cast<int>(l));
  return layers;
}

}  // namespace

TaskGraph build_task_graph(const ModelSpec& spec, const ParallelConfig& cfg,
                           const CostModel& cost, const GraphPolicy& policy) {
  if (cfg.tp != 1) {
    throw SchedError(SchedError::Code::InvalidPolicy,
                     "task graphs model the sharded path; tp must be 1");
  }
  if (spec.num_layers % (static_cast<std::int64_t>(cfg.pp) * cfg.vpp) != 0) {
    throw SchedError(SchedError::Code::InvalidPolicy,
                     "num_layers must divide evenly into pp*vpp chunks");
  }
  if (policy.rank < 0 || policy.rank >= cfg.pp) {
    throw SchedError(SchedError::Code::InvalidPolicy, "rank out of range");
  }

  std::vector<ScheduleSlot> order = policy.order;
  if (order.empty()) {
    for (int mb = 0; mb < spec.num_microbatches; ++mb) {
      order.push_back({Pass::Forward, mb, 0});
      order.push_back({Pass::Backward, mb, 0});
    }
  }
  for (const auto& slot : order) {
    if (slot.virtual_stage < 0 || slot.virtual_stage >= cfg.vpp ||
        slot.microbatch < 0 || slot.microbatch >= spec.num_microbatches) {
      throw SchedError(SchedError::Code::InvalidPolicy,
                       "schedule slot outside configured ranges");
    }
  }

  const GroupMap groups = build_process_groups(cfg, cost.topo);
  const ProcessGroup& z3g = groups.at(GroupKind::Z3).front();
  const ProcessGroup& z2g = groups.at(GroupKind::Z2).front();
  const ProcessGroup& dzpg = groups.at(GroupKind::DzpReplica).front();

  const std::int64_t ag_bytes = 2 * spec.params_per_layer;
  const std::int64_t rs_bytes = 4 * spec.params_per_layer;
  const double ag_dur =
      collective_cost(CollectiveKind::AllGather, z3g, ag_bytes, cost);
  const double rs_dur =
      collective_cost(CollectiveKind::ReduceScatter, z2g, rs_bytes, cost);
  const double fwd_dur = spec.flops_per_token_per_layer *
                         static_cast<double>(spec.seq_len) *
                         static_cast<double>(spec.micro_batch_size) /
                         cost.device_flops;
  const double bwd_dur = 2.0 * fwd_dur;

  TaskGraph graph;
  graph.spec = spec;
  graph.cfg = cfg;
  graph.rank = policy.rank;
  graph.ag_slot_bytes = ag_bytes;
  graph.grad_buf_bytes = rs_bytes;
  graph.compute_flops_per_sec = cost.device_flops;

  auto add_task = [&graph](TaskKind kind, int layer, int mb, int vstage,
                           Pass pass, double dur, std::int64_t bytes,
                           std::vector<int> deps) {
    Task t;
    t.id = static_cast<int>(graph.tasks.size());
    t.kind = kind;
    t.layer = layer;
    t.microbatch = mb;
    t.virtual_stage = vstage;
    t.pass = pass;
    t.duration = dur;
    t.bytes = bytes;
    t.deps = std::move(deps);
    graph.tasks.push_back(std::move(t));
    return graph.tasks.back().id;
  };

  int prev_compute = -1;
  std::vector<int> rs_ids;
  std::map<int, std::vector<int>> rs_by_layer;
  int last_bwd = -1;
  // (layer, microbatch, vstage, producing bwd) for deferred emission
  std::vector<std::tuple<int, int, int, int>> pending_rs;
  for (const auto& slot : order) {
    const std::vector<int> layers =
        chunk_layers(spec, cfg, policy.rank, slot.virtual_stage);
    if (slot.pass == Pass::Forward) {
      for (int l : layers) {
        const int ag = add_task(TaskKind::AgParam, l, slot.microbatch,
                                slot.virtual_stage, Pass::Forward, ag_dur,
                                ag_bytes, {});
        std::vector<int> deps{ag};
        if (prev_compute >= 0) deps.push_back(prev_compute);
        prev_compute = add_task(TaskKind::Fwd, l, slot.microbatch,
                                slot.virtual_stage, Pass::Forward, fwd_dur, 0,
                                std::move(deps));
      }
    } else {
      for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        const int l = *it;
        const int ag = add_task(TaskKind::AgParam, l, slot.microbatch,
                                slot.virtual_stage, Pass::Backward, ag_dur,
                                ag_bytes, {});
        std::vector<int> deps{ag};
        if (prev_compute >= 0) deps.push_back(prev_compute);
        prev_compute = add_task(TaskKind::Bwd, l, slot.microbatch,
                                slot.virtual_stage, Pass::Backward, bwd_dur, 0,
                                std::move(deps));
        last_bwd = prev_compute;
        if (policy.defer_rs) {
          pending_rs.emplace_back(l, slot.microbatch, slot.virtual_stage,
                                  prev_compute);
        } else {
          const int rs = add_task(TaskKind::RsGrad, l, slot.microbatch,
                                  slot.virtual_stage, Pass::Backward, rs_dur,
                                  rs_bytes, {prev_compute});
          rs_ids.push_back(rs);
          rs_by_layer[l].push_back(rs);
        }
      }
    }
  }

  // Deferred mode: every reduce-scatter waits for the whole backward pass.
  for (const auto& [l, mb, vstage, bwd] : pending_rs) {
    std::vector<int> deps{bwd};
    if (last_bwd >= 0 && last_bwd != bwd) deps.push_back(last_bwd);
    const int rs = add_task(TaskKind::RsGrad, l, mb, vstage, Pass::Backward,
                            rs_dur, rs_bytes, std::move(deps));
    rs_ids.push_back(rs);
    rs_by_layer[l].push_back(rs);
  }

  // Cross-replica gradient all-reduce; singleton replica groups need none.
  std::vector<int> opt_deps;
  if (cfg.dp / cfg.z2 > 1) {
    const std::int64_t shard_bytes = 4 * shard_elems(spec.params_per_layer, cfg.z2);
    const double ar_dur =
        collective_cost(CollectiveKind::AllReduce, dzpg, shard_bytes, cost);
    for (const auto& [layer, ids] : rs_by_layer) {
      opt_deps.push_back(add_task(TaskKind::ArDzp, layer, -1, 0, Pass::None,
                                  ar_dur, shard_bytes, ids));
    }
  } else {
    opt_deps = rs_ids;
  }
  const int opt = add_task(TaskKind::OptStep, -1, -1, 0, Pass::None, 0.0, 0,
                           std::move(opt_deps));
  for (const auto& [layer, ids] : rs_by_layer) {
    add_task(TaskKind::AgPostStep, layer, -1, 0, Pass::None, ag_dur, ag_bytes,
             {opt});
  }
  return graph;
}

PoolSet make_pools(const TaskGraph& graph, int prelaunch_depth, int rs_slots) {
  PoolSet pools;
  pools.ag.slot_count = std::max(1, prelaunch_depth);
  pools.ag.slot_bytes = graph.ag_slot_bytes;
  pools.ag.capacity = pools.ag.slot_count * pools.ag.slot_bytes;
  pools.rs.slot_count = std::max(1, rs_slots);
  pools.rs.slot_bytes = graph.grad_buf_bytes;
  pools.rs.capacity = pools.rs.slot_count * pools.rs.slot_bytes;
  return pools;
}

int derive_prelaunch_depth(const TaskGraph& graph, std::int64_t free_budget) {
  if (graph.ag_slot_bytes <= 0) return 1;
  const std::int64_t depth = free_budget / graph.ag_slot_bytes;
  const std::int64_t layers = std::max<std::int64_t>(1, graph.spec.num_layers);
  return static_cast<int>(std::clamp<std::int64_t>(depth, 1, layers));
}

Timeline simulate(const TaskGraph& graph, const PoolSet& pools, SchedMode mode) {
  if (pools.ag.slot_count < 1 || pools.rs.slot_count < 1) {
    throw SchedError(SchedError::Code::InvalidPolicy,
                     "pools need at least one slot each");
  }
  const int n = static_cast<int>(graph.tasks.size());

  // First consumer in id order; releases a pool slot on completion.
  std::vector<int> first_consumer(n, -1);
  std::vector<double> release_time(n, 0.0);
  std::vector<double> last_consumer_end(n, 0.0);
  for (const auto& t : graph.tasks) {
    for (int d : t.deps) {
      if (first_consumer[d] < 0) first_consumer[d] = t.id;
    }
  }

  Timeline tl;
  tl.mode = mode;
  tl.entries.resize(n);
  std::vector<double> start(n, 0.0), end(n, 0.0);
  double stream_free[3] = {0.0, 0.0, 0.0};
  double comm_block = 0.0;
  std::vector<int> ag_pool_order;  // scheduled AG-pool tasks, in issue order
  int rs_pool_count = 0;
  std::vector<int> rs_pool_order;

  for (int id = 0; id < n; ++id) {
    const Task& t = graph.tasks[id];
    const int s = static_cast<int>(stream_of(t.kind));
    double at = stream_free[s];
    for (int d : t.deps) {
      if (d >= id) {
        throw SchedError(SchedError::Code::DeadlockDetected,
                         "dependency on a later task in issue order");
      }
      at = std::max(at, end[d]);
    }
    if (mode == SchedMode::Vanilla && stream_of(t.kind) == StreamId::Compute) {
      // The synchronous event at each comm issue point: compute may not run
      // past it until the issued collective completes.
      at = std::max(at, comm_block);
    }
    if (uses_ag_pool(t.kind)) {
      const int in_flight = static_cast<int>(ag_pool_order.size());
      if (in_flight >= pools.ag.slot_count) {
        const int blocking =
            ag_pool_order[in_flight - pools.ag.slot_count];
        const int consumer = first_consumer[blocking];
        if (consumer >= 0 && consumer >= id) {
          throw SchedError(SchedError::Code::DeadlockDetected,
                           "pool slot held by an unscheduled consumer");
        }
        const double released =
            consumer >= 0 ? end[consumer] : end[blocking];
        release_time[blocking] = released;
        at = std::max(at, released);
      }
      ag_pool_order.push_back(id);
    }
    if (t.kind == TaskKind::RsGrad) {
      const int in_flight = static_cast<int>(rs_pool_order.size());
      if (in_flight >= pools.rs.slot_count) {
        const int blocking = rs_pool_order[in_flight - pools.rs.slot_count];
        at = std::max(at, end[blocking]);
      }
      rs_pool_order.push_back(id);
    }
    start[id] = at;
    end[id] = at + t.duration;
    stream_free[s] = end[id];
    if (mode == SchedMode::Vanilla && is_comm(t.kind)) {
      comm_block = std::max(comm_block, end[id]);
    }

    TimelineEntry& e = tl.entries[id];
    e.task_id = id;
    e.kind = t.kind;
    e.layer = t.layer;
    e.microbatch = t.microbatch;
    e.stream = stream_of(t.kind);
    e.start = start[id];
    e.end = end[id];
    e.bytes = t.bytes;
  }

  // Buffer release for memory accounting: an AG buffer stays live until its
  // last consumer (reuse edges extend this); everything else until own end.
  for (const auto& t : graph.tasks) {
    for (int d : t.deps) {
      last_consumer_end[d] = std::max(last_consumer_end[d], end[t.id]);
    }
  }
  for (int id = 0; id < n; ++id) {
    tl.entries[id].buffer_release = std::max(end[id], last_consumer_end[id]);
    const int consumer = first_consumer[id];
    tl.entries[id].pool_release = consumer >= 0 ? end[consumer] : end[id];
  }

  double last_compute_end = 0.0;
  for (int id = 0; id < n; ++id) {
    const Task& t = graph.tasks[id];
    tl.makespan = std::max(tl.makespan, end[id]);
    if (stream_of(t.kind) == StreamId::Compute) {
      tl.compute_busy += t.duration;
      last_compute_end = std::max(last_compute_end, end[id]);
    }
  }
  tl.compute_idle = last_compute_end - tl.compute_busy;

  // Dynamic-memory samples (pool buffers + gradient buffers; static states
  // are added by memory_trace).
  std::vector<std::pair<double, std::int64_t>> deltas;
  for (int id = 0; id < n; ++id) {
    const Task& t = graph.tasks[id];
    if (uses_ag_pool(t.kind)) {
      deltas.emplace_back(start[id], pools.ag.slot_bytes);
      deltas.emplace_back(tl.entries[id].buffer_release, -pools.ag.slot_bytes);
    } else if (t.kind == TaskKind::RsGrad) {
      deltas.emplace_back(start[id], pools.rs.slot_bytes);
      deltas.emplace_back(end[id], -pools.rs.slot_bytes);
      // Unsharded gradients live from each producing backward's completion
      // until this reduce-scatter completes.
      for (int d : t.deps) {
        if (graph.tasks[d].kind == TaskKind::Bwd &&
            graph.tasks[d].layer == t.layer) {
          deltas.emplace_back(end[d], graph.grad_buf_bytes);
          deltas.emplace_back(end[id], -graph.grad_buf_bytes);
        }
      }
    }
  }
  std::stable_sort(deltas.begin(), deltas.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::int64_t live = 0;
  for (const auto& [time, delta] : deltas) {
    live += delta;
    if (!tl.memory_samples.empty() && tl.memory_samples.back().first == time) {
      tl.memory_samples.back().second = std::max(tl.memory_samples.back().second, live);
    } else {
      tl.memory_samples.emplace_back(time, live);
    }
    tl.peak_memory = std::max(tl.peak_memory, live);
  }
  return tl;
}

MemoryTraceResult memory_trace(const Timeline& timeline,
                               const MemoryLedger& ledger,
                               const PoolSet& pools) {
  MemoryTraceResult out;
  out.peak_bytes = ledger.total_static + timeline.peak_memory;
  for (const auto& [time, live] : timeline.memory_samples) {
    out.samples.emplace_back(time, ledger.total_static + live);
  }

  // Pool occupancy (ring-slot semantics: a slot frees at its first consumer's
  // completion; reuse-cached data beyond that is charged separately) and
  // gradient-buffer occupancy over time.
  std::vector<std::pair<double, std::int64_t>> ag_deltas;
  std::vector<std::pair<double, std::int64_t>> rs_deltas;
  std::vector<std::pair<double, std::int64_t>> grad_deltas;
  for (const auto& e : timeline.entries) {
    if (e.kind == TaskKind::AgParam || e.kind == TaskKind::AgPostStep) {
      ag_deltas.emplace_back(e.start, pools.ag.slot_bytes);
      ag_deltas.emplace_back(e.pool_release, -pools.ag.slot_bytes);
    } else if (e.kind == TaskKind::RsGrad) {
      rs_deltas.emplace_back(e.start, pools.rs.slot_bytes);
      rs_deltas.emplace_back(e.end, -pools.rs.slot_bytes);
    }
  }
  // Gradient buffers: producing BWD end -> consuming RS end, recovered from
  // the per-layer pairing in the timeline (ascending id keeps pairs adjacent).
  std::map<std::pair<int, int>, double> bwd_end;  // (layer, microbatch)
  for (const auto& e : timeline.entries) {
    if (e.kind == TaskKind::Bwd) {
      bwd_end[{e.layer, e.microbatch}] = e.end;
    } else if (e.kind == TaskKind::RsGrad) {
      auto it = bwd_end.find({e.layer, e.microbatch});
      if (it != bwd_end.end()) {
        grad_deltas.emplace_back(it->second, 1);
        grad_deltas.emplace_back(e.end, -1);
        bwd_end.erase(it);
      }
    }
  }
  // Backwards whose RS was merged away still hold a buffer until the merged
  // RS of that layer completes; approximate with the layer's last RS end.
  std::map<int, double> last_rs_end;
  for (const auto& e : timeline.entries) {
    if (e.kind == TaskKind::RsGrad)
      last_rs_end[e.layer] = std::max(last_rs_end[e.layer], e.end);
  }
  for (const auto& [key, t0] : bwd_end) {
    auto it = last_rs_end.find(key.first);
    if (it != last_rs_end.end() && it->second > t0) {
      grad_deltas.emplace_back(t0, 1);
      grad_deltas.emplace_back(it->second, -1);
    }
  }

  auto sweep_max = [](std::vector<std::pair<double, std::int64_t>>& deltas) {
    std::stable_sort(deltas.begin(), deltas.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::int64_t live = 0, peak = 0;
    for (const auto& [time, d] : deltas) {
      live += d;
      peak = std::max(peak, live);
    }
    return peak;
  };
  const std::int64_t max_live_pool =
      std::min(sweep_max(ag_deltas), pools.ag.capacity) +
      std::min(sweep_max(rs_deltas), pools.rs.capacity);
  const std::int64_t reserved = pools.ag.capacity + pools.rs.capacity;
  out.fragmentation =
      reserved > 0
          ? static_cast<double>(reserved - max_live_pool) / static_cast<double>(reserved)
          : 0.0;

  // Peak gradient-buffer bytes: count of live buffers times per-buffer bytes.
  const std::int64_t grad_buffers = sweep_max(grad_deltas);
  out.peak_grad_buffer_bytes = grad_buffers * pools.rs.slot_bytes;
  return out;
}

double utilization_report(const Timeline& timeline, const ModelSpec& spec,
                          double peak_flops) {
  const double model_flops = 3.0 * spec.flops_per_token_per_layer *
                             static_cast<double>(spec.seq_len) *
                             static_cast<double>(spec.micro_batch_size) *
                             static_cast<double>(spec.num_microbatches) *
                             static_cast<double>(spec.num_layers);
  if (timeline.makespan <= 0.0 || peak_flops <= 0.0) return 0.0;
  return model_flops / (timeline.makespan * peak_flops);
}

}  // namespace hzp
