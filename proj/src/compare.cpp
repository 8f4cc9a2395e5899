// SPDX-License-Identifier: Apache-2.0

#include "hzp/compare.hpp"

#include <cmath>

#include "hzp/memory.hpp"

namespace hzp {

std::int64_t effective_hidden_size(const ModelSpec& spec) {
  if (spec.hidden_size > 0) return spec.hidden_size;
  // Standard dense transformer layer: roughly 12 h^2 parameters.
  return static_cast<std::int64_t>(
      std::llround(std::sqrt(static_cast<double>(spec.params_per_layer) / 12.0)));
}

double tp_comm_volume(const ModelSpec& spec, int tp, int cp, bool recompute) {
  if (tp <= 1) return 0.0;
  const double hidden = static_cast<double>(effective_hidden_size(spec));
  const double activation_bytes = 2.0 *  // BF16 elements
                                  (static_cast<double>(spec.seq_len) / cp) *
                                  static_cast<double>(spec.micro_batch_size) *
                                  hidden;
  const double per_collective =
      activation_bytes * (static_cast<double>(tp - 1) / tp);
  const int collectives = recompute ? 12 : 8;  // 4 forward ones repeated
  return per_collective * collectives;
}

double hzp_comm_volume(const ModelSpec& spec, const ParallelConfig& cfg,
                       int microbatches, const ReuseReport* reuse) {
  const double p = static_cast<double>(spec.params_per_layer);
  const double param_bytes = 2.0 * p;   // BF16
  const double grad_bytes = 4.0 * p;    // FP32
  const std::int64_t layers = spec.num_layers;

  double ag_count = 2.0 * static_cast<double>(layers) * microbatches;
  double rs_count = static_cast<double>(layers) * microbatches;
  if (reuse != nullptr) {
    ag_count -= reuse->eliminated_ag();
    rs_count -= reuse->r2_merged_rs;
  }
  const double ag_scale = static_cast<double>(cfg.z3 - 1) / cfg.z3;
  const double rs_scale = static_cast<double>(cfg.z2 - 1) / cfg.z2;

  double volume = ag_count * param_bytes * ag_scale +
                  rs_count * grad_bytes * rs_scale;

  const int replicas = cfg.dp / cfg.z2;
  if (replicas > 1) {
    const double shard_bytes =
        4.0 * static_cast<double>(shard_elems(spec.params_per_layer, cfg.z2));
    volume += static_cast<double>(layers) * 2.0 * shard_bytes *
              (static_cast<double>(replicas - 1) / replicas);
  }
  // Post-step all-gather rebuilding the parameter shards.
  volume += static_cast<double>(layers) * param_bytes * ag_scale;
  return volume;
}

CpInteractionReport cp_group_interaction(const ParallelConfig& cfg,
                                         const Topology& topo) {
  CpInteractionReport report;
  report.z2_intra_node = cfg.z2 <= topo.ranks_per_node;
  report.z3_intra_node = cfg.z3 <= topo.ranks_per_node;
  report.cp_intra_node = cfg.cp <= topo.ranks_per_node;
  report.share_groups =
      report.z2_intra_node && report.z3_intra_node && report.cp_intra_node;
  report.tp_cp_conflict =
      static_cast<std::int64_t>(cfg.tp) * cfg.cp > topo.ranks_per_node;
  return report;
}

}  // namespace hzp
