// SPDX-License-Identifier: Apache-2.0
//
// End-to-end numerical verification of the sharded training workflow: a tiny
// dense model trained over simulated ranks (all-gather parameters, per-layer
// compute, FP32 reduce-scatter of gradients, cross-replica all-reduce, Adam
// on optimizer shards, post-step re-gather) checked for equivalence against
// single-device full-parameter training.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hzp/config.hpp"

namespace hzp {

enum class Precision { Fp64, Mixed };

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Dense multilayer perceptron: tanh hidden layers, linear output, loss is
// half the mean squared output. dims holds layer widths (first entry is the
// input width).
struct MlpShape {
  std::vector<int> dims;

  int num_layers() const { return static_cast<int>(dims.size()) - 1; }
  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (std::size_t i = 1; i < dims.size(); ++i) {
      n += static_cast<std::int64_t>(dims[i - 1]) * dims[i] + dims[i];
    }
    return n;
  }
};

// Deterministic seeded values in [-0.5, 0.5); identical across hosts.
template <typename T>
std::vector<T> seeded_uniform(std::size_t n, std::uint64_t seed);

template <typename T>
struct LossGrad {
  T loss{};
  std::vector<T> grad;
};

// Forward + backward over a batch laid out row-major (batch_size x dims[0]).
template <typename T>
LossGrad<T> mlp_loss_grad(const MlpShape& shape, const std::vector<T>& params,
                          const std::vector<T>& inputs, int batch_size);

template <typename T>
T mlp_loss(const MlpShape& shape, const std::vector<T>& params,
           const std::vector<T>& inputs, int batch_size);

// The gradient-summation tree of the sharded path: per-rank microbatch
// accumulation, ascending-rank sums within each z2 block, then ascending
// block order across replicas. The baseline uses the same tree so the two
// paths round at identical points.
struct ReductionOrder {
  int dp = 1;
  int z2 = 1;
};

// Per-rank shards of the training states.
template <typename T>
struct ShardedState {
  int rank = 0;
  std::vector<T> param_shard;   // 1/z3 of the working copy (BF16 in mixed mode)
  std::vector<T> grad_shard;    // 1/z2 accumulated FP32 gradient
  std::vector<T> master_shard;  // 1/z1 FP32/FP64 parameter replica
  std::vector<T> momentum_shard;
  std::vector<T> variance_shard;
  int adam_step = 0;
};

template <typename T>
struct BaselineState {
  std::vector<T> working;  // full working copy (BF16-valued in mixed mode)
  std::vector<T> master;
  std::vector<T> momentum;
  std::vector<T> variance;
  int adam_step = 0;
};

class EquivalenceFailure : public std::runtime_error {
 public:
  explicit EquivalenceFailure(const std::string& what)
      : std::runtime_error(what) {}
};

// Per-rank per-microbatch inputs: batches[rank][mb] is a flat
// (batch_size x dims[0]) matrix.
template <typename T>
using RankBatches = std::vector<std::vector<std::vector<T>>>;

template <typename T>
std::vector<ShardedState<T>> shard_init(const MlpShape& shape,
                                        const ParallelConfig& cfg,
                                        std::uint64_t seed, bool bf16_working);

template <typename T>
BaselineState<T> baseline_init(const MlpShape& shape, std::uint64_t seed,
                               bool bf16_working);

// One sharded optimizer step; returns per-replica summed losses.
template <typename T>
std::vector<T> train_step_hzp(std::vector<ShardedState<T>>& states,
                              const MlpShape& shape, const ParallelConfig& cfg,
                              const RankBatches<T>& batches, int batch_size,
                              const AdamParams& adam, bool bf16_working);

// The unsharded oracle with the same data order, summation tree, and
// rounding points; returns per-replica summed losses.
template <typename T>
std::vector<T> train_step_baseline(BaselineState<T>& state,
                                   const MlpShape& shape,
                                   const RankBatches<T>& batches,
                                   int batch_size, const AdamParams& adam,
                                   const ReductionOrder& order,
                                   bool bf16_working);

// Reassemble the full working copy from the per-rank parameter shards of the
// first z3 group (bitwise identical across groups).
template <typename T>
std::vector<T> gather_params(const std::vector<ShardedState<T>>& states,
                             const MlpShape& shape, const ParallelConfig& cfg);

struct EquivalenceCase {
  int dp = 1;
  int z1 = 1;
  int z2 = 1;
  int z3 = 1;
  int microbatches = 1;
};

struct EquivalenceResult {
  EquivalenceCase config;
  double max_abs_diff = 0.0;
  double rel_diff = 0.0;
  bool pass = false;
};

struct EquivalenceReport {
  Precision precision = Precision::Fp64;
  int steps = 0;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  std::vector<EquivalenceResult> results;
  bool all_pass = true;
};

// All divisor triples (z1, z2, z3) of each dp value.
std::vector<EquivalenceCase> default_grid(const std::vector<int>& dp_values,
                                          const std::vector<int>& microbatches);

// Runs sharded vs. baseline training over the grid. Thresholds: exact
// equality in FP64 mode, 1e-6 max-abs in mixed mode. inject_fault perturbs
// one gradient element (negative-control hook).
EquivalenceReport verify_equivalence(const std::vector<EquivalenceCase>& grid,
                                     std::uint64_t seed, int steps,
                                     Precision precision,
                                     const AdamParams& adam = {},
                                     bool inject_fault = false);

std::string report_to_json(const EquivalenceReport& report);

}  // namespace hzp
