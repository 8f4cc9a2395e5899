// SPDX-License-Identifier: Apache-2.0
//
// Data-correct collective primitives over in-process simulated ranks, and the
// analytic ring cost model used by the scheduler.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hzp/config.hpp"

namespace hzp {

enum class Dtype { BF16, FP32, FP64 };

class CollectiveError : public std::runtime_error {
 public:
  enum class Code { ShapeMismatch, DTypeUnsupported };
  CollectiveError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

template <typename T>
struct RankTensor {
  int owner_rank = 0;
  int shard_index = -1;  // -1 means "full"
  Dtype dtype = Dtype::FP32;
  std::vector<T> elems;
};

// Every rank ends with the concatenation of all shards in shard_index order,
// bit-identical across ranks.
template <typename T>
std::vector<RankTensor<T>> all_gather(const ProcessGroup& group,
                                      const std::vector<RankTensor<T>>& shards);

// Rank i ends with the elementwise sum of all ranks' i-th segments. Summation
// is in ascending-rank order so results are deterministic. BF16 inputs are
// rejected; the workflow mandates FP32 (or FP64) reduction.
template <typename T>
std::vector<RankTensor<T>> reduce_scatter(const ProcessGroup& group,
                                          const std::vector<RankTensor<T>>& fulls);

// Every rank ends with the ascending-rank-order sum of all ranks' tensors.
template <typename T>
std::vector<RankTensor<T>> all_reduce(const ProcessGroup& group,
                                      const std::vector<RankTensor<T>>& tensors);

// Cut a full tensor back into its per-rank shards (inverse of all_gather for
// the canonical flat order).
template <typename T>
std::vector<RankTensor<T>> reshard(const ProcessGroup& group,
                                   const RankTensor<T>& full);

enum class CollectiveKind { AllGather, ReduceScatter, AllReduce };

struct CostModel {
  Topology topo;
  // Device compute throughput used to turn FLOPs into task durations.
  double device_flops = 1e12;
};

// Ring-algorithm time estimate. Group size 1 costs 0; all-gather and
// reduce-scatter cost (g-1) * (bytes/g) / bw + (g-1) * latency, all-reduce
// twice that. Inter-node bandwidth/latency apply when the group spans nodes.
double collective_cost(CollectiveKind kind, const ProcessGroup& group,
                       std::int64_t bytes, const CostModel& model);

}  // namespace hzp
