// SPDX-License-Identifier: Apache-2.0
//
// Static-memory accounting for hierarchically sharded training states and
// the sharding-plan search.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hzp/config.hpp"

namespace hzp {

// Per-rank byte ledger of mixed-precision training states.
struct MemoryLedger {
  std::int64_t params_bf16 = 0;
  std::int64_t grads_fp32 = 0;
  std::int64_t replica_fp32 = 0;
  std::int64_t momentum_fp32 = 0;
  std::int64_t variance_fp32 = 0;
  std::int64_t total_static = 0;
};

class MemoryError : public std::runtime_error {
 public:
  enum class Code { ReplicaExceedsWorld, NoFeasibleConfig };
  MemoryError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Shards are padded: per-shard element count is ceil(n / parts).
std::int64_t shard_elems(std::int64_t n, std::int64_t parts);

// Per-rank static bytes under full ZeRO-3 sharding across dp ranks (18N/dp).
std::int64_t mem_zero3(std::int64_t n, int dp);

// Uniform replica sharding with group size z < dp (18N/z).
std::int64_t mem_zp(std::int64_t n, int z, int dp);

// Hierarchical sharding: 12N/z1 (optimizer states) + 4N/z2 (gradients)
// + 2N/z3 (parameters).
std::int64_t mem_hzp(std::int64_t n, int z1, int z2, int z3);

MemoryLedger ledger(const ModelSpec& spec, const ParallelConfig& cfg);

struct PlanEntry {
  ParallelConfig cfg;
  std::int64_t static_bytes = 0;
  int spanning_z2_groups = 0;
  int spanning_z3_groups = 0;
  bool spans_nodes_z2 = false;
  bool spans_nodes_z3 = false;
  double comm_cost_estimate = 0.0;  // seconds per microbatch
};

// Enumerates divisor combinations (z1, z2, z3) of base.dp, keeps those whose
// static + activation bytes fit the budget, and ranks by fewest node-spanning
// Z2/Z3 groups, then lowest per-microbatch communication cost, then lowest
// static memory. Throws NoFeasibleConfig when nothing fits.
std::vector<PlanEntry> plan_search(const ModelSpec& spec, const Topology& topo,
                                   const ParallelConfig& base,
                                   std::int64_t budget_bytes,
                                   std::int64_t activation_bytes);

}  // namespace hzp
