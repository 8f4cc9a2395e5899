// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] is the path to the hzpsim binary (used by the CLI
// determinism check).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hzp/collective.hpp"
#include "hzp/compare.hpp"
#include "hzp/config.hpp"
#include "hzp/kernels.hpp"
#include "hzp/memory.hpp"
#include "hzp/pipeline.hpp"
#include "hzp/sched.hpp"
#include "hzp/train.hpp"

namespace {

int g_failures = 0;

void report(int index, const char* title, bool pass, const std::string& detail) {
  std::printf("%s: %2d. %s%s%s\n", pass ? "PASS" : "FAIL", index, title,
              detail.empty() ? "" : " -- ", detail.c_str());
  if (!pass) ++g_failures;
}

// ---------------------------------------------------------------------------
// 1. Memory-formula collapse identities, 1000 randomized cases, exact.
void criterion_memory_identities() {
  std::mt19937_64 rng(2024);
  bool ok = true;
  std::string detail;
  for (int i = 0; i < 1000 && ok; ++i) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng() % 100000000000ULL);
    const int dp = 1 << (rng() % 8);  // 1..128
    std::vector<int> divs;
    for (int d = 1; d <= dp; ++d) {
      if (dp % d == 0) divs.push_back(d);
    }
    const int z = divs[rng() % divs.size()];
    if (hzp::mem_hzp(n, z, z, z) != hzp::mem_zp(n, z, dp)) {
      ok = false;
      detail = "mem_hzp(z,z,z) != mem_zp(z)";
    }
    if (hzp::mem_hzp(n, dp, dp, dp) != hzp::mem_zero3(n, dp)) {
      ok = false;
      detail = "mem_hzp(dp,dp,dp) != mem_zero3(dp)";
    }
  }
  report(1, "memory formulas collapse exactly over 1000 randomized cases", ok,
         detail);
}

// ---------------------------------------------------------------------------
// 2. 36B-parameter reference configuration, exact byte ledger.
void criterion_reference_config() {
  const std::int64_t n = 36000000000LL;
  const bool total_ok = hzp::mem_hzp(n, 64, 8, 8) == 33750000000LL;
  const bool parts_ok = 12 * hzp::shard_elems(n, 64) == 6750000000LL &&
                        4 * hzp::shard_elems(n, 8) == 18000000000LL &&
                        2 * hzp::shard_elems(n, 8) == 9000000000LL;
  report(2, "36B config yields 33.75e9 bytes with 6.75/18/9 GB components",
         total_ok && parts_ok, "");
}

// ---------------------------------------------------------------------------
// 3. Collective identities, FP64 exact, 500 random vectors, groups 1-16.
void criterion_collectives() {
  std::mt19937_64 rng(7);
  bool ok = true;
  std::string detail;
  for (int trial = 0; trial < 500 && ok; ++trial) {
    const int ranks = 1 + static_cast<int>(rng() % 16);
    const std::size_t per = 1 + rng() % 48;
    hzp::ProcessGroup g;
    for (int r = 0; r < ranks; ++r) g.ranks.push_back(r);

    std::vector<hzp::RankTensor<double>> shards(ranks);
    std::vector<hzp::RankTensor<double>> fulls(ranks);
    for (int r = 0; r < ranks; ++r) {
      shards[r] = {r, r, hzp::Dtype::FP64, {}};
      fulls[r] = {r, -1, hzp::Dtype::FP64, {}};
      shards[r].elems.resize(per);
      fulls[r].elems.resize(per * ranks);
      for (auto& v : shards[r].elems) {
        v = static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5;
      }
      for (auto& v : fulls[r].elems) {
        v = static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5;
      }
    }

    const auto gathered = hzp::all_gather(g, shards);
    const auto back = hzp::reshard(g, gathered[0]);
    for (int r = 0; r < ranks && ok; ++r) {
      if (std::memcmp(back[r].elems.data(), shards[r].elems.data(),
                      per * sizeof(double)) != 0) {
        ok = false;
        detail = "reshard(all_gather) is not the identity";
      }
    }

    const auto rs = hzp::reduce_scatter(g, fulls);
    const auto ag_rs = hzp::all_gather(g, rs);
    const auto ar = hzp::all_reduce(g, fulls);
    for (int r = 0; r < ranks && ok; ++r) {
      if (std::memcmp(ag_rs[r].elems.data(), ar[r].elems.data(),
                      per * ranks * sizeof(double)) != 0) {
        ok = false;
        detail = "all_gather(reduce_scatter) != all_reduce";
      }
    }
  }
  report(3, "collective identities hold bitwise over 500 FP64 cases", ok,
         detail);
}

// ---------------------------------------------------------------------------
// 4. Numerical equivalence over the full grid, FP64 exact / mixed 1e-6.
void criterion_equivalence() {
  const auto grid = hzp::default_grid({1, 2, 4, 8}, {1, 2, 4});
  const auto fp64 =
      hzp::verify_equivalence(grid, 2024, 3, hzp::Precision::Fp64);
  const auto mixed =
      hzp::verify_equivalence(grid, 2024, 3, hzp::Precision::Mixed);
  bool ok = fp64.all_pass && mixed.all_pass;
  std::string detail;
  double worst_mixed = 0.0;
  for (const auto& r : fp64.results) {
    if (r.max_abs_diff != 0.0) ok = false;
  }
  for (const auto& r : mixed.results) {
    worst_mixed = std::max(worst_mixed, r.max_abs_diff);
    if (r.max_abs_diff > 1e-6) ok = false;
  }
  {
    std::ostringstream s;
    s << grid.size() << " configs per precision, worst mixed diff "
      << worst_mixed;
    detail = s.str();
  }
  report(4, "sharded training is FP64-exact and mixed within 1e-6", ok, detail);
}

// ---------------------------------------------------------------------------
// Shared helpers for the scheduling criteria.
hzp::ModelSpec sched_model(int layers, int mbs, double flops) {
  hzp::ModelSpec spec;
  spec.num_layers = layers;
  spec.params_per_layer = 1000000;
  spec.seq_len = 1024;
  spec.micro_batch_size = 1;
  spec.num_microbatches = mbs;
  spec.flops_per_token_per_layer = flops;
  return spec;
}

hzp::CostModel sched_cost(double bw) {
  hzp::CostModel cost;
  cost.topo.num_nodes = 1;
  cost.topo.ranks_per_node = 8;
  cost.topo.intra_bw = bw;
  cost.topo.intra_latency = 1e-7;
  cost.device_flops = 1e12;
  return cost;
}

hzp::ParallelConfig sched_parallel() {
  hzp::ParallelConfig cfg;
  cfg.dp = 8;
  cfg.z1 = 8;
  cfg.z2 = 4;
  cfg.z3 = 4;
  return cfg;
}

// 5. Async dominance over 200 randomized graphs, strict with real comm.
void criterion_dominance() {
  std::mt19937_64 rng(55);
  bool ok = true;
  std::string detail;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    const int layers = 4 + static_cast<int>(rng() % 29);  // 4..32
    const int mbs = 1 + static_cast<int>(rng() % 4);
    // comm/compute ratio in [0.1, 2.0] via the link bandwidth
    const double ratio = 0.1 + 1.9 * (static_cast<double>(rng() % 1000) / 999.0);
    const double flops = 1e7;
    const auto spec = sched_model(layers, mbs, flops);
    const double fwd = flops * 1024.0 / 1e12;
    // Scale bandwidth so a parameter all-gather costs about ratio * fwd.
    const double bw = 2.0e6 * 0.75 / (ratio * fwd);
    const auto cost = sched_cost(bw);
    const auto graph = hzp::build_task_graph(spec, sched_parallel(), cost, {});
    const auto pools = hzp::make_pools(graph, 2, 1);
    const auto v = hzp::simulate(graph, pools, hzp::SchedMode::Vanilla);
    const auto a = hzp::simulate(graph, pools, hzp::SchedMode::Async);
    if (a.compute_idle > v.compute_idle) {
      ok = false;
      detail = "async idled more than vanilla";
    }
    if (a.compute_idle >= v.compute_idle) {
      ok = false;
      detail = "async not strictly better with comm > 0 and >= 4 layers";
    }
    if (a.compute_busy != v.compute_busy) {
      ok = false;
      detail = "compute busy time not conserved";
    }
  }
  report(5, "async dominates vanilla on 200 randomized graphs (strict)", ok,
         detail);
}

// 6. Fragmentation zero at steady state; deferred RS holds more memory.
void criterion_memory_behavior() {
  bool ok = true;
  std::string detail;
  for (int layers = 2; layers <= 16 && ok; layers *= 2) {
    for (int mbs = 1; mbs <= 4 && ok; mbs *= 2) {
      const auto spec = sched_model(layers, mbs, 1e7);
      const auto cost = sched_cost(1e10);
      const auto led = hzp::ledger(spec, sched_parallel());

      hzp::GraphPolicy immediate;
      const auto g_imm =
          hzp::build_task_graph(spec, sched_parallel(), cost, immediate);
      const auto pools = hzp::make_pools(g_imm, 2, 1);
      const auto tl = hzp::simulate(g_imm, pools, hzp::SchedMode::Async);
      const auto mem_imm = hzp::memory_trace(tl, led, pools);
      if (mem_imm.fragmentation != 0.0) {
        ok = false;
        detail = "nonzero steady-state fragmentation";
      }

      hzp::GraphPolicy deferred;
      deferred.defer_rs = true;
      const auto g_def =
          hzp::build_task_graph(spec, sched_parallel(), cost, deferred);
      const auto pools_def = hzp::make_pools(g_def, 2, 1);
      const auto mem_def = hzp::memory_trace(
          hzp::simulate(g_def, pools_def, hzp::SchedMode::Async), led, pools_def);
      if (mem_imm.peak_grad_buffer_bytes >= mem_def.peak_grad_buffer_bytes) {
        ok = false;
        detail = "immediate RS did not beat deferred RS on gradient memory";
      }
    }
  }
  report(6, "zero pool fragmentation; immediate RS beats deferred RS", ok,
         detail);
}

// 7. Pipeline reuse counts equal the brute-force adjacency oracle.
void criterion_pipeline_reuse() {
  bool ok = true;
  std::string detail;
  for (int pp = 1; pp <= 4 && ok; ++pp) {
    for (int vpp = 1; vpp <= 2 && ok; ++vpp) {
      for (int m = 1; m <= 8 && ok; ++m) {
        if (vpp > 1 && m % pp != 0) continue;
        const auto variant = vpp > 1 ? hzp::PipeVariant::Interleaved
                                     : hzp::PipeVariant::OneFOneB;
        const auto sched = hzp::build_schedule(pp, vpp, m, variant);
        for (int rank = 0; rank < pp && ok; ++rank) {
          const auto& slots = sched.per_rank[rank];

          // Brute-force oracle straight off the slot list.
          int want_ag = 0, want_rs = 0;
          for (std::size_t i = 0; i + 1 < slots.size(); ++i) {
            if (slots[i].pass == slots[i + 1].pass &&
                slots[i].virtual_stage == slots[i + 1].virtual_stage) {
              ++want_ag;
            }
          }
          for (std::size_t i = 0; i + 2 < slots.size(); ++i) {
            if (slots[i].pass == hzp::Pass::Forward &&
                slots[i + 1].pass == hzp::Pass::Backward &&
                slots[i + 2].pass == hzp::Pass::Forward &&
                slots[i].virtual_stage == slots[i + 2].virtual_stage) {
              ++want_ag;
            }
          }
          for (std::size_t i = 0; i + 1 < slots.size(); ++i) {
            if (slots[i].pass == hzp::Pass::Backward &&
                slots[i + 1].pass == hzp::Pass::Backward &&
                slots[i].virtual_stage == slots[i + 1].virtual_stage) {
              ++want_rs;
            }
          }

          hzp::ParallelConfig cfg = sched_parallel();
          cfg.pp = pp;
          cfg.vpp = vpp;
          hzp::GraphPolicy policy;
          policy.rank = rank;
          policy.order = slots;
          auto spec = sched_model(pp * vpp, m, 1e7);  // one layer per chunk
          auto graph =
              hzp::build_task_graph(spec, cfg, sched_cost(1e10), policy);
          const auto rep = hzp::apply_reuse(sched, graph);
          if (rep.eliminated_ag() != want_ag || rep.r2_merged_rs != want_rs) {
            ok = false;
            std::ostringstream s;
            s << "pp=" << pp << " vpp=" << vpp << " m=" << m << " rank=" << rank
              << ": got AG " << rep.eliminated_ag() << "/RS " << rep.r2_merged_rs
              << ", want " << want_ag << "/" << want_rs;
            detail = s.str();
            break;
          }
          // Post-reuse timeline must still respect every dependency.
          const auto pools = hzp::make_pools(graph, 2, 1);
          const auto tl = hzp::simulate(graph, pools, hzp::SchedMode::Async);
          for (const auto& t : graph.tasks) {
            for (int d : t.deps) {
              if (tl.entries[t.id].start < tl.entries[d].end - 1e-15) {
                ok = false;
                detail = "post-reuse timeline violates a dependency";
              }
            }
          }
        }
      }
    }
  }
  report(7, "reuse counts match the brute-force oracle; timelines stay sound",
         ok, detail);
}

// 8. Recompute keeps HZP all-gathers constant; TP pays the forward share.
void criterion_recompute() {
  const auto sched = hzp::build_schedule(2, 1, 4, hzp::PipeVariant::OneFOneB);
  hzp::ParallelConfig cfg = sched_parallel();
  cfg.pp = 2;
  hzp::GraphPolicy policy;
  policy.order = sched.per_rank[0];
  const auto spec = sched_model(4, 4, 1e7);
  auto plain = hzp::build_task_graph(spec, cfg, sched_cost(1e10), policy);
  auto recomputed = plain;
  hzp::recompute_rule(recomputed, true);
  const bool ag_ok = plain.count(hzp::TaskKind::AgParam) ==
                         recomputed.count(hzp::TaskKind::AgParam) &&
                     recomputed.count(hzp::TaskKind::FwdRecompute) ==
                         plain.count(hzp::TaskKind::Bwd);

  hzp::ModelSpec tp_spec = spec;
  tp_spec.hidden_size = 1024;
  const double off = hzp::tp_comm_volume(tp_spec, 8, 1, false);
  const double on = hzp::tp_comm_volume(tp_spec, 8, 1, true);
  const bool tp_ok = on == 1.5 * off && off > 0.0;
  report(8, "recompute adds no HZP all-gathers; TP repeats its forward share",
         ag_ok && tp_ok, "");
}

// 9. Context-length invariance of HZP volume; linear TP scaling.
void criterion_context_invariance() {
  hzp::ModelSpec spec = sched_model(4, 4, 1e7);
  spec.hidden_size = 1024;
  spec.micro_batch_size = 2;
  hzp::ParallelConfig cfg = sched_parallel();
  double hzp_prev = -1.0;
  bool hzp_ok = true;
  std::vector<double> tp_vol;
  for (const std::int64_t s : {8192LL, 32768LL, 131072LL}) {
    hzp::ModelSpec at = spec;
    at.seq_len = s;
    const double h = hzp::hzp_comm_volume(at, cfg, 4);
    if (hzp_prev >= 0.0 && h != hzp_prev) hzp_ok = false;
    hzp_prev = h;
    tp_vol.push_back(hzp::tp_comm_volume(at, 8, 1, false));
  }
  const bool tp_ok = tp_vol[1] == 4.0 * tp_vol[0] && tp_vol[2] == 16.0 * tp_vol[0];
  report(9, "hzp volume is bit-identical across 8K/32K/128K; TP scales 1:4:16",
         hzp_ok && tp_ok, "");
}

// ---------------------------------------------------------------------------
// 10. CLI determinism: every command rerun yields byte-identical files.
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_cli_determinism(const char* hzpsim) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hzp_acceptance";
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.json";
  {
    std::ofstream out(cfg);
    out << R"({
      "model": {"num_layers": 8, "params_per_layer": 1000000,
                "seq_len": 4096, "micro_batch_size": 1, "num_microbatches": 4,
                "flops_per_token_per_layer": 6e6, "hidden_size": 512},
      "parallel": {"dp": 8, "z1": 8, "z2": 4, "z3": 4, "tp": 8},
      "topology": {"num_nodes": 8, "ranks_per_node": 8,
                   "intra_bw": 1e11, "inter_bw": 1e10,
                   "intra_latency": 1e-6, "inter_latency": 1e-5}
    })";
  }
  // tp is only exercised by sweep; the simulate path needs tp = 1.
  const fs::path cfg_sim = dir / "config_sim.json";
  {
    std::ofstream out(cfg_sim);
    out << R"({
      "model": {"num_layers": 8, "params_per_layer": 1000000,
                "seq_len": 4096, "micro_batch_size": 1, "num_microbatches": 4,
                "flops_per_token_per_layer": 6e6},
      "parallel": {"dp": 8, "z1": 8, "z2": 4, "z3": 4},
      "topology": {"num_nodes": 2, "ranks_per_node": 4,
                   "intra_bw": 1e11, "inter_bw": 1e10,
                   "intra_latency": 1e-6, "inter_latency": 1e-5}
    })";
  }

  struct Cmd {
    const char* name;
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::string q = "\"";
  std::vector<Cmd> cmds;
  cmds.push_back({"plan",
                  "plan " + cfg.string() + " --budget 100000000 -o " +
                      (dir / "plan_OUT.csv").string(),
                  {(dir / "plan_OUT.csv").string()}});
  cmds.push_back({"simulate",
                  "simulate " + cfg_sim.string() + " --mode async --trace " +
                      (dir / "trace_OUT.json").string() + " -o " +
                      (dir / "sim_OUT.csv").string(),
                  {(dir / "sim_OUT.csv").string(),
                   (dir / "trace_OUT.json").string()}});
  cmds.push_back({"verify",
                  "verify " + cfg_sim.string() +
                      " --precision mixed --steps 2 --seed 9 -o " +
                      (dir / "verify_OUT.json").string(),
                  {(dir / "verify_OUT.json").string()}});
  cmds.push_back({"sweep",
                  "sweep " + cfg.string() + " --seq-lens 8192,32768,131072 -o " +
                      (dir / "sweep_OUT.csv").string(),
                  {(dir / "sweep_OUT.csv").string()}});

  bool ok = true;
  std::string detail;
  for (const auto& cmd : cmds) {
    std::vector<std::string> first;
    for (int run = 0; run < 2 && ok; ++run) {
      const std::string line =
          q + hzpsim + q + " " + cmd.args + " > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) {
        ok = false;
        detail = std::string(cmd.name) + " exited nonzero";
        break;
      }
      if (run == 0) {
        for (const auto& out : cmd.outputs) first.push_back(slurp(out));
      } else {
        for (std::size_t i = 0; i < cmd.outputs.size(); ++i) {
          const std::string second = slurp(cmd.outputs[i]);
          if (second.empty() || second != first[i]) {
            ok = false;
            detail = std::string(cmd.name) + " output differs between runs";
          }
        }
      }
    }
    if (!ok) break;
  }
  report(10, "CLI reruns produce byte-identical outputs", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  criterion_memory_identities();
  criterion_reference_config();
  criterion_collectives();
  criterion_equivalence();
  criterion_dominance();
  criterion_memory_behavior();
  criterion_pipeline_reuse();
  criterion_recompute();
  criterion_context_invariance();
  if (argc > 1) {
    criterion_cli_determinism(argv[1]);
  } else {
    report(10, "CLI reruns produce byte-identical outputs", false,
           "hzpsim path not supplied");
  }
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
