// SPDX-License-Identifier: Apache-2.0

#include "hzp/collective.hpp"

#include <sstream>

#include "hzp/kernels.hpp"

namespace hzp {

namespace {

template <typename T>
void check_group_inputs(const ProcessGroup& group,
                        const std::vector<RankTensor<T>>& tensors,
                        bool same_length) {
  if (static_cast<int>(tensors.size()) != group.size()) {
    std::ostringstream msg;
    msg << "group has " << group.size() << " ranks but " << tensors.size()
        << " tensors were supplied";
    throw CollectiveError(CollectiveError::Code::ShapeMismatch, msg.str());
  }
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    if (tensors[i].dtype != tensors[0].dtype) {
      throw CollectiveError(CollectiveError::Code::ShapeMismatch,
                            "inconsistent dtypes within group");
    }
    if (same_length && tensors[i].elems.size() != tensors[0].elems.size()) {
      throw CollectiveError(CollectiveError::Code::ShapeMismatch,
                            "inconsistent tensor lengths within group");
    }
  }
}

void add_into(float* acc, const float* src, std::size_t n) {
  kernels::active_impl().add_f32(acc, src, n);
}
void add_into(double* acc, const double* src, std::size_t n) {
  kernels::active_impl().add_f64(acc, src, n);
}

}  // namespace

template <typename T>
std::vector<RankTensor<T>> all_gather(const ProcessGroup& group,
                                      const std::vector<RankTensor<T>>& shards) {
  check_group_inputs(group, shards, false);
  std::vector<T> full;
  // Concatenate in shard_index order; inputs arrive in rank order, whose
  // position within the group is the shard index.
  for (int i = 0; i < group.size(); ++i) {
    const RankTensor<T>* shard = nullptr;
    for (const auto& s : shards) {
      if (s.shard_index == i) { shard = &s; break; }
    }
    if (shard == nullptr) shard = &shards[i];
    full.insert(full.end(), shard->elems.begin(), shard->elems.end());
  }
  std::vector<RankTensor<T>> out(group.size());
  for (int i = 0; i < group.size(); ++i) {
    out[i].owner_rank = group.ranks[i];
    out[i].shard_index = -1;
    out[i].dtype = shards[0].dtype;
    out[i].elems = full;
  }
  return out;
}

template <typename T>
std::vector<RankTensor<T>> reduce_scatter(const ProcessGroup& group,
                                          const std::vector<RankTensor<T>>& fulls) {
  check_group_inputs(group, fulls, true);
  if (fulls[0].dtype == Dtype::BF16) {
    throw CollectiveError(CollectiveError::Code::DTypeUnsupported,
                          "reduce-scatter requires FP32 or FP64 inputs");
  }
  const std::size_t total = fulls[0].elems.size();
  const std::size_t g = static_cast<std::size_t>(group.size());
  if (total % g != 0) {
    throw CollectiveError(CollectiveError::Code::ShapeMismatch,
                          "tensor length not divisible by group size");
  }
  const std::size_t seg = total / g;
  // Canonical ascending-rank summation order.
  std::vector<T> sum = fulls[0].elems;
  for (std::size_t r = 1; r < g; ++r) {
    add_into(sum.data(), fulls[r].elems.data(), total);
  }
  std::vector<RankTensor<T>> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    out[i].owner_rank = group.ranks[i];
    out[i].shard_index = static_cast<int>(i);
    out[i].dtype = fulls[0].dtype;
    out[i].elems.assign(sum.begin() + i * seg, sum.begin() + (i + 1) * seg);
  }
  return out;
}

template <typename T>
std::vector<RankTensor<T>> all_reduce(const ProcessGroup& group,
                                      const std::vector<RankTensor<T>>& tensors) {
  check_group_inputs(group, tensors, true);
  std::vector<T> sum = tensors[0].elems;
  for (std::size_t r = 1; r < tensors.size(); ++r) {
    add_into(sum.data(), tensors[r].elems.data(), sum.size());
  }
  std::vector<RankTensor<T>> out(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    out[i].owner_rank = group.ranks[i];
    out[i].shard_index = -1;
    out[i].dtype = tensors[0].dtype;
    out[i].elems = sum;
  }
  return out;
}

template <typename T>
std::vector<RankTensor<T>> reshard(const ProcessGroup& group,
                                   const RankTensor<T>& full) {
  const std::size_t g = static_cast<std::size_t>(group.size());
  if (full.elems.size() % g != 0) {
    throw CollectiveError(CollectiveError::Code::ShapeMismatch,
                          "tensor length not divisible by group size");
  }
  const std::size_t seg = full.elems.size() / g;
  std::vector<RankTensor<T>> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    out[i].owner_rank = group.ranks[i];
    out[i].shard_index = static_cast<int>(i);
    out[i].dtype = full.dtype;
    out[i].elems.assign(full.elems.begin() + i * seg,
                        full.elems.begin() + (i + 1) * seg);
  }
  return out;
}

template std::vector<RankTensor<float>> all_gather(const ProcessGroup&,
                                                   const std::vector<RankTensor<float>>&);
template std::vector<RankTensor<double>> all_gather(const ProcessGroup&,
                                                    const std::vector<RankTensor<double>>&);
template std::vector<RankTensor<float>> reduce_scatter(const ProcessGroup&,
                                                       const std::vector<RankTensor<float>>&);
template std::vector<RankTensor<double>> reduce_scatter(const ProcessGroup&,
                                                        const std::vector<RankTensor<double>>&);
template std::vector<RankTensor<float>> all_reduce(const ProcessGroup&,
                                                   const std::vector<RankTensor<float>>&);
template std::vector<RankTensor<double>> all_reduce(const ProcessGroup&,
                                                    const std::vector<RankTensor<double>>&);
template std::vector<RankTensor<float>> reshard(const ProcessGroup&,
                                                const RankTensor<float>&);
template std::vector<RankTensor<double>> reshard(const ProcessGroup&,
                                                 const RankTensor<double>&);

double collective_cost(CollectiveKind kind, const ProcessGroup& group,
                       std::int64_t bytes, const CostModel& model) {
  const int g = group.size();
  if (g <= 1 || bytes < 0) return 0.0;
  const double bw = group.spans_nodes ? model.topo.inter_bw : model.topo.intra_bw;
  const double lat =
      group.spans_nodes ? model.topo.inter_latency : model.topo.intra_latency;
  const double steps = static_cast<double>(g - 1);
  const double per_step_bytes = static_cast<double>(bytes) / g;
  const double one_pass = steps * per_step_bytes / bw + steps * lat;
  return kind == CollectiveKind::AllReduce ? 2.0 * one_pass : one_pass;
}

}  // namespace hzp
