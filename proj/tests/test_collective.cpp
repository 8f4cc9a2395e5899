// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "hzp/collective.hpp"

namespace {

hzp::ProcessGroup group_of(int size) {
  hzp::ProcessGroup g;
  g.kind = hzp::GroupKind::Z2;
  for (int r = 0; r < size; ++r) g.ranks.push_back(r);
  return g;
}

template <typename T>
std::vector<hzp::RankTensor<T>> random_fulls(int ranks, std::size_t n,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<hzp::RankTensor<T>> fulls(ranks);
  for (int r = 0; r < ranks; ++r) {
    fulls[r].owner_rank = r;
    fulls[r].shard_index = -1;
    fulls[r].dtype = std::is_same_v<T, float> ? hzp::Dtype::FP32 : hzp::Dtype::FP64;
    fulls[r].elems.resize(n);
    for (auto& v : fulls[r].elems) {
      v = static_cast<T>(static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5);
    }
  }
  return fulls;
}

}  // namespace

TEST_CASE("all_gather concatenates shards identically on every rank") {
  const auto g = group_of(3);
  std::vector<hzp::RankTensor<double>> shards(3);
  for (int r = 0; r < 3; ++r) {
    shards[r] = {r, r, hzp::Dtype::FP64, {double(r) + 0.5, double(r) - 0.5}};
  }
  const auto fulls = hzp::all_gather(g, shards);
  REQUIRE(fulls.size() == 3);
  const std::vector<double> want{0.5, -0.5, 1.5, 0.5, 2.5, 1.5};
  for (const auto& f : fulls) {
    CHECK(f.shard_index == -1);
    CHECK(f.elems == want);
  }
}

TEST_CASE("reshard inverts all_gather bitwise") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int ranks = 1 + static_cast<int>(rng() % 16);
    const std::size_t per = 1 + rng() % 64;
    const auto g = group_of(ranks);
    std::vector<hzp::RankTensor<double>> shards(ranks);
    for (int r = 0; r < ranks; ++r) {
      shards[r].owner_rank = r;
      shards[r].shard_index = r;
      shards[r].dtype = hzp::Dtype::FP64;
      shards[r].elems.resize(per);
      for (auto& v : shards[r].elems) v = static_cast<double>(rng()) * 1e-6;
    }
    const auto fulls = hzp::all_gather(g, shards);
    const auto back = hzp::reshard(g, fulls[0]);
    REQUIRE(back.size() == static_cast<std::size_t>(ranks));
    for (int r = 0; r < ranks; ++r) {
      CHECK(std::memcmp(back[r].elems.data(), shards[r].elems.data(),
                        per * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("all_gather of reduce_scatter equals all_reduce exactly in FP64") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int ranks = 1 + static_cast<int>(rng() % 16);
    const std::size_t n = static_cast<std::size_t>(ranks) * (1 + rng() % 32);
    const auto g = group_of(ranks);
    const auto fulls = random_fulls<double>(ranks, n, rng());
    const auto shards = hzp::reduce_scatter(g, fulls);
    const auto gathered = hzp::all_gather(g, shards);
    const auto reduced = hzp::all_reduce(g, fulls);
    for (int r = 0; r < ranks; ++r) {
      REQUIRE(gathered[r].elems.size() == reduced[r].elems.size());
      CHECK(std::memcmp(gathered[r].elems.data(), reduced[r].elems.data(),
                        n * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("reductions sum in ascending rank order deterministically") {
  const auto g = group_of(4);
  const auto fulls = random_fulls<float>(4, 8, 77);
  const auto once = hzp::all_reduce(g, fulls);
  const auto twice = hzp::all_reduce(g, fulls);
  for (int r = 0; r < 4; ++r) {
    CHECK(std::memcmp(once[r].elems.data(), twice[r].elems.data(),
                      8 * sizeof(float)) == 0);
  }
  // Oracle: left-to-right accumulation over ranks.
  for (std::size_t i = 0; i < 8; ++i) {
    float acc = fulls[0].elems[i];
    for (int r = 1; r < 4; ++r) acc += fulls[r].elems[i];
    CHECK(once[0].elems[i] == acc);
  }
}

TEST_CASE("bf16 inputs are rejected by reductions") {
  const auto g = group_of(2);
  auto fulls = random_fulls<float>(2, 4, 3);
  fulls[0].dtype = hzp::Dtype::BF16;
  fulls[1].dtype = hzp::Dtype::BF16;
  CHECK_THROWS_AS(hzp::reduce_scatter(g, fulls), hzp::CollectiveError);
}

TEST_CASE("mismatched shapes are rejected") {
  const auto g = group_of(2);
  auto fulls = random_fulls<double>(2, 4, 13);
  fulls[1].elems.pop_back();
  CHECK_THROWS_AS(hzp::all_reduce(g, fulls), hzp::CollectiveError);
}

TEST_CASE("ring cost model follows the alpha-beta form") {
  hzp::CostModel model;
  model.topo.num_nodes = 1;
  model.topo.ranks_per_node = 8;
  model.topo.intra_bw = 1e9;
  model.topo.intra_latency = 1e-6;
  const auto g = group_of(4);
  const std::int64_t bytes = 4000;
  const double ag =
      hzp::collective_cost(hzp::CollectiveKind::AllGather, g, bytes, model);
  const double rs =
      hzp::collective_cost(hzp::CollectiveKind::ReduceScatter, g, bytes, model);
  const double ar =
      hzp::collective_cost(hzp::CollectiveKind::AllReduce, g, bytes, model);
  const double want = 3.0 * (bytes / 4.0) / 1e9 + 3.0 * 1e-6;
  CHECK(ag == doctest::Approx(want).epsilon(1e-12));
  CHECK(rs == doctest::Approx(want).epsilon(1e-12));
  CHECK(ar == doctest::Approx(2.0 * want).epsilon(1e-12));
}

TEST_CASE("singleton groups communicate for free") {
  hzp::CostModel model;
  model.topo.intra_bw = 1e9;
  const auto g = group_of(1);
  CHECK(hzp::collective_cost(hzp::CollectiveKind::AllReduce, g, 1 << 20, model) ==
        0.0);
}

TEST_CASE("node-spanning groups pay inter-node bandwidth and latency") {
  hzp::CostModel model;
  model.topo.num_nodes = 2;
  model.topo.ranks_per_node = 2;
  model.topo.intra_bw = 1e11;
  model.topo.inter_bw = 1e9;
  model.topo.intra_latency = 1e-7;
  model.topo.inter_latency = 1e-5;
  auto g = group_of(4);
  g.spans_nodes = true;
  const std::int64_t bytes = 4000;
  const double got =
      hzp::collective_cost(hzp::CollectiveKind::AllGather, g, bytes, model);
  const double want = 3.0 * (bytes / 4.0) / 1e9 + 3.0 * 1e-5;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}
