// SPDX-License-Identifier: Apache-2.0

#include "hzp/memory.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include "hzp/collective.hpp"

namespace hzp {

std::int64_t shard_elems(std::int64_t n, std::int64_t parts) {
  return (n + parts - 1) / parts;
}

std::int64_t mem_zero3(std::int64_t n, int dp) {
  return 18 * shard_elems(n, dp);
}

std::int64_t mem_zp(std::int64_t n, int z, int dp) {
  if (z > dp) {
    std::ostringstream msg;
    msg << "replica group size " << z << " exceeds dp world " << dp;
    throw MemoryError(MemoryError::Code::ReplicaExceedsWorld, msg.str());
  }
  return 18 * shard_elems(n, z);
}

std::int64_t mem_hzp(std::int64_t n, int z1, int z2, int z3) {
  return 12 * shard_elems(n, z1) + 4 * shard_elems(n, z2) +
         2 * shard_elems(n, z3);
}

MemoryLedger ledger(const ModelSpec& spec, const ParallelConfig& cfg) {
  const std::int64_t n = spec.total_params();
  MemoryLedger out;
  out.params_bf16 = 2 * shard_elems(n, cfg.z3);
  out.grads_fp32 = 4 * shard_elems(n, cfg.z2);
  out.replica_fp32 = 4 * shard_elems(n, cfg.z1);
  out.momentum_fp32 = 4 * shard_elems(n, cfg.z1);
  out.variance_fp32 = 4 * shard_elems(n, cfg.z1);
  out.total_static = out.params_bf16 + out.grads_fp32 + out.replica_fp32 +
                     out.momentum_fp32 + out.variance_fp32;
  return out;
}

namespace {

std::vector<int> divisors(int n) {
  std::vector<int> out;
  for (int d = 1; d <= n; ++d) {
    if (n % d == 0) out.push_back(d);
  }
  return out;
}

int count_spanning(const std::vector<ProcessGroup>& groups) {
  int spanning = 0;
  for (const auto& g : groups) {
    if (g.spans_nodes) ++spanning;
  }
  return spanning;
}

// Per-microbatch communication cost for one full forward+backward sweep:
// two parameter all-gathers and one gradient reduce-scatter per layer.
double per_microbatch_cost(const ModelSpec& spec, const ParallelConfig& cfg,
                           const GroupMap& groups, const CostModel& model) {
  const ProcessGroup& z3g = groups.at(GroupKind::Z3).front();
  const ProcessGroup& z2g = groups.at(GroupKind::Z2).front();
  const std::int64_t ag_bytes = 2 * spec.params_per_layer;
  const std::int64_t rs_bytes = 4 * spec.params_per_layer;
  const double per_layer =
      2.0 * collective_cost(CollectiveKind::AllGather, z3g, ag_bytes, model) +
      collective_cost(CollectiveKind::ReduceScatter, z2g, rs_bytes, model);
  return per_layer * static_cast<double>(spec.num_layers);
}

}  // namespace

std::vector<PlanEntry> plan_search(const ModelSpec& spec, const Topology& topo,
                                   const ParallelConfig& base,
                                   std::int64_t budget_bytes,
                                   std::int64_t activation_bytes) {
  const CostModel model{topo};
  std::vector<PlanEntry> feasible;
  for (int z1 : divisors(base.dp)) {
    for (int z2 : divisors(base.dp)) {
      for (int z3 : divisors(base.dp)) {
        ParallelConfig cfg = base;
        cfg.z1 = z1;
        cfg.z2 = z2;
        cfg.z3 = z3;
        const MemoryLedger led = ledger(spec, cfg);
        if (led.total_static + activation_bytes > budget_bytes) continue;
        const GroupMap groups = build_process_groups(cfg, topo);
        PlanEntry e;
        e.cfg = cfg;
        e.static_bytes = led.total_static;
        e.spanning_z2_groups = count_spanning(groups.at(GroupKind::Z2));
        e.spanning_z3_groups = count_spanning(groups.at(GroupKind::Z3));
        e.spans_nodes_z2 = e.spanning_z2_groups > 0;
        e.spans_nodes_z3 = e.spanning_z3_groups > 0;
        e.comm_cost_estimate = per_microbatch_cost(spec, cfg, groups, model);
        feasible.push_back(std::move(e));
      }
    }
  }
  if (feasible.empty()) {
    throw MemoryError(MemoryError::Code::NoFeasibleConfig,
                      "no sharding configuration fits the memory budget");
  }
  std::stable_sort(feasible.begin(), feasible.end(),
                   [](const PlanEntry& a, const PlanEntry& b) {
                     const int sa = a.spanning_z2_groups + a.spanning_z3_groups;
                     const int sb = b.spanning_z2_groups + b.spanning_z3_groups;
                     if (sa != sb) return sa < sb;
                     if (a.comm_cost_estimate != b.comm_cost_estimate)
                       return a.comm_cost_estimate < b.comm_cost_estimate;
                     if (a.static_bytes != b.static_bytes)
                       return a.static_bytes < b.static_bytes;
                     return std::tuple(a.cfg.z1, a.cfg.z2, a.cfg.z3) <
                            std::tuple(b.cfg.z1, b.cfg.z2, b.cfg.z3);
                   });
  return feasible;
}

}  // namespace hzp
