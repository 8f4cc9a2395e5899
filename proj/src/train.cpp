// SPDX-License-Identifier: Apache-2.0

#include "hzp/train.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hzp/collective.hpp"
#include "hzp/kernels.hpp"
#include "hzp/memory.hpp"

namespace hzp {

template <typename T>
std::vector<T> seeded_uniform(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<T> out(n);
  for (auto& v : out) {
    // (raw >> 11) has 53 random bits; the mapping is identical on all hosts.
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5;
    v = static_cast<T>(u);
  }
  return out;
}

template std::vector<float> seeded_uniform<float>(std::size_t, std::uint64_t);
template std::vector<double> seeded_uniform<double>(std::size_t, std::uint64_t);

namespace {

template <typename T>
struct LayerView {
  T* w;  // out x in, row-major
  T* b;
  int in;
  int out;
};

template <typename T, typename Vec>
std::vector<LayerView<T>> layer_views(const MlpShape& shape, Vec& params) {
  std::vector<LayerView<T>> views;
  std::int64_t off = 0;
  for (int l = 0; l < shape.num_layers(); ++l) {
    const int in = shape.dims[l];
    const int out = shape.dims[l + 1];
    views.push_back({params.data() + off, params.data() + off + in * out, in, out});
    off += static_cast<std::int64_t>(in) * out + out;
  }
  return views;
}

// Forward pass; activations[l] is the input to layer l (batch x dims[l]).
template <typename T>
std::vector<std::vector<T>> mlp_forward(const MlpShape& shape,
                                        const std::vector<T>& params,
                                        const std::vector<T>& inputs,
                                        int batch_size) {
  const auto layers = layer_views<const T>(shape, params);
  std::vector<std::vector<T>> acts;
  acts.push_back(inputs);
  for (int l = 0; l < shape.num_layers(); ++l) {
    const auto& lv = layers[l];
    const auto& x = acts.back();
    std::vector<T> y(static_cast<std::size_t>(batch_size) * lv.out);
    for (int s = 0; s < batch_size; ++s) {
      for (int o = 0; o < lv.out; ++o) {
        T acc = lv.b[o];
        for (int i = 0; i < lv.in; ++i) {
          acc += lv.w[static_cast<std::int64_t>(o) * lv.in + i] *
                 x[static_cast<std::size_t>(s) * lv.in + i];
        }
        const bool hidden = l + 1 < shape.num_layers();
        y[static_cast<std::size_t>(s) * lv.out + o] =
            hidden ? static_cast<T>(std::tanh(acc)) : acc;
      }
    }
    acts.push_back(std::move(y));
  }
  return acts;
}

template <typename T>
T output_loss(const std::vector<T>& y, int batch_size, int out_dim) {
  T acc = T(0);
  for (const T v : y) acc += v * v;
  return acc / (T(2) * static_cast<T>(batch_size) * static_cast<T>(out_dim));
}

}  // namespace

template <typename T>
T mlp_loss(const MlpShape& shape, const std::vector<T>& params,
           const std::vector<T>& inputs, int batch_size) {
  const auto acts = mlp_forward(shape, params, inputs, batch_size);
  return output_loss(acts.back(), batch_size, shape.dims.back());
}

template <typename T>
LossGrad<T> mlp_loss_grad(const MlpShape& shape, const std::vector<T>& params,
                          const std::vector<T>& inputs, int batch_size) {
  const auto acts = mlp_forward(shape, params, inputs, batch_size);
  const int nl = shape.num_layers();
  const int out_dim = shape.dims.back();

  LossGrad<T> result;
  result.loss = output_loss(acts.back(), batch_size, out_dim);
  result.grad.assign(shape.param_count(), T(0));
  const auto layers = layer_views<const T>(shape, params);
  auto grads = layer_views<T>(shape, result.grad);

  const T scale = T(1) / (static_cast<T>(batch_size) * static_cast<T>(out_dim));
  std::vector<T> delta(acts.back().size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = acts.back()[i] * scale;

  for (int l = nl - 1; l >= 0; --l) {
    const auto& lv = layers[l];
    const auto& x = acts[l];
    auto& gv = grads[l];
    for (int s = 0; s < batch_size; ++s) {
      for (int o = 0; o < lv.out; ++o) {
        const T d = delta[static_cast<std::size_t>(s) * lv.out + o];
        gv.b[o] += d;
        for (int i = 0; i < lv.in; ++i) {
          gv.w[static_cast<std::int64_t>(o) * lv.in + i] +=
              d * x[static_cast<std::size_t>(s) * lv.in + i];
        }
      }
    }
    if (l > 0) {
      std::vector<T> prev(static_cast<std::size_t>(batch_size) * lv.in, T(0));
      for (int s = 0; s < batch_size; ++s) {
        for (int i = 0; i < lv.in; ++i) {
          T acc = T(0);
          for (int o = 0; o < lv.out; ++o) {
            acc += lv.w[static_cast<std::int64_t>(o) * lv.in + i] *
                   delta[static_cast<std::size_t>(s) * lv.out + o];
          }
          // tanh' through the cached activation value.
          const T a = x[static_cast<std::size_t>(s) * lv.in + i];
          prev[static_cast<std::size_t>(s) * lv.in + i] = acc * (T(1) - a * a);
        }
      }
      delta = std::move(prev);
    }
  }
  return result;
}

namespace {

template <typename T>
void bf16_round_vec(std::vector<T>& v, bool enabled) {
  if constexpr (std::is_same_v<T, float>) {
    if (enabled) kernels::active_impl().bf16_round_f32(v.data(), v.size());
  } else {
    (void)v;
    (void)enabled;
  }
}

template <typename T>
std::vector<T> padded(const std::vector<T>& v, std::int64_t len) {
  std::vector<T> out(v.begin(), v.end());
  out.resize(len, T(0));
  return out;
}

template <typename T>
void adam_update(std::vector<T>& master, std::vector<T>& momentum,
                 std::vector<T>& variance, const T* grad, std::size_t n,
                 int step, const AdamParams& adam) {
  const T lr = static_cast<T>(adam.lr);
  const T b1 = static_cast<T>(adam.beta1);
  const T b2 = static_cast<T>(adam.beta2);
  const T eps = static_cast<T>(adam.eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<T>(adam.beta1), step));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<T>(adam.beta2), step));
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    momentum[i] = b1 * momentum[i] + (T(1) - b1) * g;
    variance[i] = b2 * variance[i] + (T(1) - b2) * g * g;
    const T mhat = momentum[i] / bc1;
    const T vhat = variance[i] / bc2;
    master[i] -= lr * mhat / (static_cast<T>(std::sqrt(vhat)) + eps);
  }
}

ProcessGroup contiguous_group(GroupKind kind, int first, int size) {
  ProcessGroup g;
  g.kind = kind;
  for (int i = 0; i < size; ++i) g.ranks.push_back(first + i);
  return g;
}

ProcessGroup strided_group(GroupKind kind, int first, int count, int stride) {
  ProcessGroup g;
  g.kind = kind;
  for (int i = 0; i < count; ++i) g.ranks.push_back(first + i * stride);
  return g;
}

template <typename T>
Dtype dtype_of() {
  return std::is_same_v<T, float> ? Dtype::FP32 : Dtype::FP64;
}

}  // namespace

template <typename T>
BaselineState<T> baseline_init(const MlpShape& shape, std::uint64_t seed,
                               bool bf16_working) {
  BaselineState<T> st;
  st.master = seeded_uniform<T>(shape.param_count(), seed);
  st.momentum.assign(shape.param_count(), T(0));
  st.variance.assign(shape.param_count(), T(0));
  st.working = st.master;
  bf16_round_vec(st.working, bf16_working);
  return st;
}

template <typename T>
std::vector<ShardedState<T>> shard_init(const MlpShape& shape,
                                        const ParallelConfig& cfg,
                                        std::uint64_t seed, bool bf16_working) {
  const std::int64_t p = shape.param_count();
  const std::int64_t s1 = shard_elems(p, cfg.z1);
  const std::int64_t s2 = shard_elems(p, cfg.z2);
  const std::int64_t s3 = shard_elems(p, cfg.z3);
  const std::vector<T> master = seeded_uniform<T>(p, seed);
  std::vector<T> working = master;
  bf16_round_vec(working, bf16_working);
  const std::vector<T> master_pad = padded(master, s1 * cfg.z1);
  const std::vector<T> working_pad = padded(working, s3 * cfg.z3);

  std::vector<ShardedState<T>> states(cfg.dp);
  for (int r = 0; r < cfg.dp; ++r) {
    auto& st = states[r];
    st.rank = r;
    const int i1 = r % cfg.z1;
    const int i3 = r % cfg.z3;
    st.master_shard.assign(master_pad.begin() + i1 * s1,
                           master_pad.begin() + (i1 + 1) * s1);
    st.momentum_shard.assign(s1, T(0));
    st.variance_shard.assign(s1, T(0));
    st.param_shard.assign(working_pad.begin() + i3 * s3,
                          working_pad.begin() + (i3 + 1) * s3);
    st.grad_shard.assign(s2, T(0));
  }
  return states;
}

template <typename T>
std::vector<T> gather_params(const std::vector<ShardedState<T>>& states,
                             const MlpShape& shape, const ParallelConfig& cfg) {
  std::vector<T> full;
  for (int r = 0; r < cfg.z3; ++r) {
    full.insert(full.end(), states[r].param_shard.begin(),
                states[r].param_shard.end());
  }
  full.resize(shape.param_count());
  return full;
}

template <typename T>
std::vector<T> train_step_hzp(std::vector<ShardedState<T>>& states,
                              const MlpShape& shape, const ParallelConfig& cfg,
                              const RankBatches<T>& batches, int batch_size,
                              const AdamParams& adam, bool bf16_working) {
  const std::int64_t p = shape.param_count();
  const std::int64_t s1 = shard_elems(p, cfg.z1);
  const std::int64_t s2 = shard_elems(p, cfg.z2);
  const std::int64_t s3 = shard_elems(p, cfg.z3);
  const int dp = cfg.dp;
  const int replicas = dp / cfg.z2;
  const int num_mb = static_cast<int>(batches.at(0).size());

  // Parameter pre-fetch: all-gather the working copy within each Z3 group.
  std::vector<std::vector<T>> full_params(dp);
  for (int g0 = 0; g0 < dp; g0 += cfg.z3) {
    const ProcessGroup group = contiguous_group(GroupKind::Z3, g0, cfg.z3);
    std::vector<RankTensor<T>> shards(cfg.z3);
    for (int i = 0; i < cfg.z3; ++i) {
      shards[i] = {g0 + i, i, dtype_of<T>(), states[g0 + i].param_shard};
    }
    auto fulls = all_gather(group, shards);
    for (int i = 0; i < cfg.z3; ++i) {
      fulls[i].elems.resize(p);
      full_params[g0 + i] = std::move(fulls[i].elems);
    }
  }

  // Forward/backward per microbatch with an immediate FP32 reduce-scatter of
  // gradients within each Z2 block, accumulated on the gradient shards.
  std::vector<T> losses(dp, T(0));
  for (auto& st : states) st.grad_shard.assign(s2, T(0));
  for (int mb = 0; mb < num_mb; ++mb) {
    std::vector<std::vector<T>> mb_grads(dp);
    for (int r = 0; r < dp; ++r) {
      auto lg = mlp_loss_grad(shape, full_params[r], batches[r][mb], batch_size);
      losses[r] += lg.loss;
      mb_grads[r] = padded(lg.grad, s2 * cfg.z2);
    }
    for (int g0 = 0; g0 < dp; g0 += cfg.z2) {
      const ProcessGroup group = contiguous_group(GroupKind::Z2, g0, cfg.z2);
      std::vector<RankTensor<T>> fulls(cfg.z2);
      for (int i = 0; i < cfg.z2; ++i) {
        fulls[i] = {g0 + i, -1, dtype_of<T>(), std::move(mb_grads[g0 + i])};
      }
      auto shards = reduce_scatter(group, fulls);
      for (int i = 0; i < cfg.z2; ++i) {
        auto& acc = states[g0 + i].grad_shard;
        if constexpr (std::is_same_v<T, float>) {
          kernels::active_impl().add_f32(acc.data(), shards[i].elems.data(),
                                         acc.size());
        } else {
          kernels::active_impl().add_f64(acc.data(), shards[i].elems.data(),
                                         acc.size());
        }
      }
    }
  }

  // Cross-replica all-reduce among ranks holding the same gradient shard.
  if (replicas > 1) {
    for (int i = 0; i < cfg.z2; ++i) {
      const ProcessGroup group =
          strided_group(GroupKind::DzpReplica, i, replicas, cfg.z2);
      std::vector<RankTensor<T>> tensors(replicas);
      for (int b = 0; b < replicas; ++b) {
        tensors[b] = {i + b * cfg.z2, -1, dtype_of<T>(),
                      states[i + b * cfg.z2].grad_shard};
      }
      auto reduced = all_reduce(group, tensors);
      for (int b = 0; b < replicas; ++b) {
        states[i + b * cfg.z2].grad_shard = std::move(reduced[b].elems);
      }
    }
  }

  // Every rank now sees the same full gradient; assemble it once.
  std::vector<T> full_grad;
  for (int i = 0; i < cfg.z2; ++i) {
    full_grad.insert(full_grad.end(), states[i].grad_shard.begin(),
                     states[i].grad_shard.end());
  }
  full_grad.resize(p);
  const std::vector<T> grad_pad = padded(full_grad, s1 * cfg.z1);

  // Optimizer step on the Z1 optimizer-state shards.
  for (auto& st : states) {
    const int i1 = st.rank % cfg.z1;
    st.adam_step += 1;
    adam_update(st.master_shard, st.momentum_shard, st.variance_shard,
                grad_pad.data() + i1 * s1, static_cast<std::size_t>(s1),
                st.adam_step, adam);
  }

  // Post-step all-gather: rebuild the working copy from the optimizer
  // states, round on write-back, and recut the Z3 parameter shards.
  for (int g0 = 0; g0 < dp; g0 += cfg.z1) {
    std::vector<T> master_full;
    for (int i = 0; i < cfg.z1; ++i) {
      master_full.insert(master_full.end(), states[g0 + i].master_shard.begin(),
                         states[g0 + i].master_shard.end());
    }
    master_full.resize(p);
    std::vector<T> working = master_full;
    bf16_round_vec(working, bf16_working);
    const std::vector<T> working_pad = padded(working, s3 * cfg.z3);
    for (int i = 0; i < cfg.z1; ++i) {
      const int rank = g0 + i;
      const int i3 = rank % cfg.z3;
      states[rank].param_shard.assign(working_pad.begin() + i3 * s3,
                                      working_pad.begin() + (i3 + 1) * s3);
    }
  }
  return losses;
}

template <typename T>
std::vector<T> train_step_baseline(BaselineState<T>& state,
                                   const MlpShape& shape,
                                   const RankBatches<T>& batches,
                                   int batch_size, const AdamParams& adam,
                                   const ReductionOrder& order,
                                   bool bf16_working) {
  const std::int64_t p = shape.param_count();
  const int dp = order.dp;
  const int z2 = order.z2;
  const int num_mb = static_cast<int>(batches.at(0).size());

  std::vector<T> losses(dp, T(0));
  std::vector<T> total(p, T(0));
  for (int g0 = 0; g0 < dp; g0 += z2) {
    // One z2 block: microbatch-major accumulation of ascending-rank sums,
    // mirroring the sharded path's reduce-scatter then local accumulate.
    std::vector<T> block_acc(p, T(0));
    for (int mb = 0; mb < num_mb; ++mb) {
      std::vector<T> block_sum(p, T(0));
      for (int i = 0; i < z2; ++i) {
        const int r = g0 + i;
        auto lg = mlp_loss_grad(shape, state.working, batches[r][mb], batch_size);
        losses[r] += lg.loss;
        for (std::int64_t e = 0; e < p; ++e) block_sum[e] += lg.grad[e];
      }
      for (std::int64_t e = 0; e < p; ++e) block_acc[e] += block_sum[e];
    }
    for (std::int64_t e = 0; e < p; ++e) total[e] += block_acc[e];
  }

  state.adam_step += 1;
  adam_update(state.master, state.momentum, state.variance, total.data(),
              static_cast<std::size_t>(p), state.adam_step, adam);
  state.working = state.master;
  bf16_round_vec(state.working, bf16_working);
  return losses;
}

template BaselineState<float> baseline_init(const MlpShape&, std::uint64_t, bool);
template BaselineState<double> baseline_init(const MlpShape&, std::uint64_t, bool);
template std::vector<ShardedState<float>> shard_init(const MlpShape&,
                                                     const ParallelConfig&,
                                                     std::uint64_t, bool);
template std::vector<ShardedState<double>> shard_init(const MlpShape&,
                                                      const ParallelConfig&,
                                                      std::uint64_t, bool);
template std::vector<float> gather_params(const std::vector<ShardedState<float>>&,
                                          const MlpShape&, const ParallelConfig&);
template std::vector<double> gather_params(const std::vector<ShardedState<double>>&,
                                           const MlpShape&, const ParallelConfig&);
template std::vector<float> train_step_hzp(std::vector<ShardedState<float>>&,
                                           const MlpShape&, const ParallelConfig&,
                                           const RankBatches<float>&, int,
                                           const AdamParams&, bool);
template std::vector<double> train_step_hzp(std::vector<ShardedState<double>>&,
                                            const MlpShape&, const ParallelConfig&,
                                            const RankBatches<double>&, int,
                                            const AdamParams&, bool);
template std::vector<float> train_step_baseline(BaselineState<float>&,
                                                const MlpShape&,
                                                const RankBatches<float>&, int,
                                                const AdamParams&,
                                                const ReductionOrder&, bool);
template std::vector<double> train_step_baseline(BaselineState<double>&,
                                                 const MlpShape&,
                                                 const RankBatches<double>&, int,
                                                 const AdamParams&,
                                                 const ReductionOrder&, bool);
template LossGrad<float> mlp_loss_grad(const MlpShape&, const std::vector<float>&,
                                       const std::vector<float>&, int);
template LossGrad<double> mlp_loss_grad(const MlpShape&, const std::vector<double>&,
                                        const std::vector<double>&, int);
template float mlp_loss(const MlpShape&, const std::vector<float>&,
                        const std::vector<float>&, int);
template double mlp_loss(const MlpShape&, const std::vector<double>&,
                         const std::vector<double>&, int);

std::vector<EquivalenceCase> default_grid(const std::vector<int>& dp_values,
                                          const std::vector<int>& microbatches) {
  std::vector<EquivalenceCase> grid;
  for (int dp : dp_values) {
    std::vector<int> divs;
    for (int d = 1; d <= dp; ++d) {
      if (dp % d == 0) divs.push_back(d);
    }
    for (int z1 : divs) {
      for (int z2 : divs) {
        for (int z3 : divs) {
          for (int mb : microbatches) {
            grid.push_back({dp, z1, z2, z3, mb});
          }
        }
      }
    }
  }
  return grid;
}

namespace {

template <typename T>
EquivalenceResult run_case(const EquivalenceCase& c, const MlpShape& shape,
                           std::uint64_t seed, int steps, double threshold,
                           const AdamParams& adam, bool bf16_working,
                           bool exact, bool inject_fault) {
  const int batch_size = 4;
  ParallelConfig cfg;
  cfg.dp = c.dp;
  cfg.z1 = c.z1;
  cfg.z2 = c.z2;
  cfg.z3 = c.z3;

  auto states = shard_init<T>(shape, cfg, seed, bf16_working);
  auto baseline = baseline_init<T>(shape, seed, bf16_working);
  const ReductionOrder order{c.dp, c.z2};

  for (int step = 0; step < steps; ++step) {
    RankBatches<T> batches(c.dp);
    for (int r = 0; r < c.dp; ++r) {
      for (int mb = 0; mb < c.microbatches; ++mb) {
        batches[r].push_back(seeded_uniform<T>(
            static_cast<std::size_t>(batch_size) * shape.dims[0],
            seed ^ (0x9E3779B97F4A7C15ull * (step * 1024ull + r * 32ull + mb + 1))));
      }
    }
    train_step_hzp(states, shape, cfg, batches, batch_size, adam, bf16_working);
    train_step_baseline(baseline, shape, batches, batch_size, adam, order,
                        bf16_working);
  }
  if (inject_fault && !states.empty() && !states[0].param_shard.empty()) {
    states[0].param_shard[0] += T(0.001);
  }

  const auto hzp_params = gather_params(states, shape, cfg);
  EquivalenceResult res;
  res.config = c;
  double max_abs = 0.0, max_ref = 0.0;
  for (std::int64_t e = 0; e < shape.param_count(); ++e) {
    const double diff = std::abs(static_cast<double>(hzp_params[e]) -
                                 static_cast<double>(baseline.working[e]));
    max_abs = std::max(max_abs, diff);
    max_ref = std::max(max_ref, std::abs(static_cast<double>(baseline.working[e])));
  }
  res.max_abs_diff = max_abs;
  res.rel_diff = max_ref > 0 ? max_abs / max_ref : max_abs;
  res.pass = exact ? (max_abs == 0.0) : (max_abs <= threshold);
  return res;
}

}  // namespace

EquivalenceReport verify_equivalence(const std::vector<EquivalenceCase>& grid,
                                     std::uint64_t seed, int steps,
                                     Precision precision,
                                     const AdamParams& adam,
                                     bool inject_fault) {
  MlpShape shape{{12, 20, 8}};
  EquivalenceReport report;
  report.precision = precision;
  report.steps = steps;
  report.seed = seed;
  report.threshold = precision == Precision::Fp64 ? 0.0 : 1e-6;
  for (const auto& c : grid) {
    EquivalenceResult res;
    if (precision == Precision::Fp64) {
      res = run_case<double>(c, shape, seed, steps, 0.0, adam, false, true,
                             inject_fault);
    } else {
      res = run_case<float>(c, shape, seed, steps, 1e-6, adam, true, false,
                            inject_fault);
    }
    report.all_pass = report.all_pass && res.pass;
    report.results.push_back(res);
  }
  return report;
}

std::string report_to_json(const EquivalenceReport& report) {
  nlohmann::json j;
  j["precision"] = report.precision == Precision::Fp64 ? "fp64" : "mixed";
  j["steps"] = report.steps;
  j["seed"] = report.seed;
  j["threshold"] = report.threshold;
  j["all_pass"] = report.all_pass;
  j["results"] = nlohmann::json::array();
  for (const auto& r : report.results) {
    j["results"].push_back({{"dp", r.config.dp},
                            {"z1", r.config.z1},
                            {"z2", r.config.z2},
                            {"z3", r.config.z3},
                            {"microbatches", r.config.microbatches},
                            {"max_abs_diff", r.max_abs_diff},
                            {"rel_diff", r.rel_diff},
                            {"pass", r.pass}});
  }
  return j.dump(2);
}

}  // namespace hzp
