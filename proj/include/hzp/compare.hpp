// SPDX-License-Identifier: Apache-2.0
//
// Analytic comparison of sharded-DP (HZP) against tensor parallelism:
// communication volume scaling and context-parallel group interaction.

#pragma once

#include <cstdint>

#include "hzp/config.hpp"
#include "hzp/pipeline.hpp"

namespace hzp {

// TP activation-collective bytes per layer per microbatch: 8 collectives
// (4 all-gathers + 4 reduce-scatters), each moving the sequence-sharded
// BF16 activation scaled by (tp-1)/tp. Recomputation repeats the 4 forward
// collectives. Volume is linear in seq_len; tp=1 costs nothing.
double tp_comm_volume(const ModelSpec& spec, int tp, int cp, bool recompute);

// HZP weight-collective bytes per iteration: retained parameter all-gathers,
// retained gradient reduce-scatters, the cross-replica all-reduce, and the
// post-step all-gather. Independent of seq_len by construction.
double hzp_comm_volume(const ModelSpec& spec, const ParallelConfig& cfg,
                       int microbatches, const ReuseReport* reuse = nullptr);

// Effective transformer hidden size used by the TP volume model.
std::int64_t effective_hidden_size(const ModelSpec& spec);

struct CpInteractionReport {
  bool z2_intra_node = false;
  bool z3_intra_node = false;
  bool cp_intra_node = false;
  bool share_groups = false;     // sharding and CP both fit within a node
  bool tp_cp_conflict = false;   // tp*cp exceeds the node size
};

CpInteractionReport cp_group_interaction(const ParallelConfig& cfg,
                                         const Topology& topo);

}  // namespace hzp
