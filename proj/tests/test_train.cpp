// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "hzp/train.hpp"

namespace {

const hzp::MlpShape kShape{{6, 10, 4}};

hzp::RankBatches<double> batches_for(int dp, int microbatches, int batch_size,
                                     std::uint64_t seed) {
  hzp::RankBatches<double> batches(dp);
  for (int r = 0; r < dp; ++r) {
    for (int mb = 0; mb < microbatches; ++mb) {
      batches[r].push_back(hzp::seeded_uniform<double>(
          static_cast<std::size_t>(batch_size) * kShape.dims[0],
          seed + 100 * r + mb));
    }
  }
  return batches;
}

}  // namespace

TEST_CASE("seeded values are deterministic and bounded") {
  const auto a = hzp::seeded_uniform<double>(1000, 42);
  const auto b = hzp::seeded_uniform<double>(1000, 42);
  const auto c = hzp::seeded_uniform<double>(1000, 43);
  CHECK(a == b);
  CHECK(a != c);
  for (const double v : a) {
    CHECK(v >= -0.5);
    CHECK(v < 0.5);
  }
  const auto f = hzp::seeded_uniform<float>(4, 42);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i] == static_cast<float>(a[i]));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const int batch = 3;
  const auto params = hzp::seeded_uniform<double>(kShape.param_count(), 7);
  const auto inputs = hzp::seeded_uniform<double>(
      static_cast<std::size_t>(batch) * kShape.dims[0], 8);
  const auto lg = hzp::mlp_loss_grad(kShape, params, inputs, batch);
  CHECK(lg.loss == hzp::mlp_loss(kShape, params, inputs, batch));
  const double h = 1e-6;
  for (std::int64_t i = 0; i < kShape.param_count(); i += 7) {
    auto up = params, down = params;
    up[i] += h;
    down[i] -= h;
    const double fd = (hzp::mlp_loss(kShape, up, inputs, batch) -
                       hzp::mlp_loss(kShape, down, inputs, batch)) /
                      (2.0 * h);
    CHECK(lg.grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("a single unsharded rank reproduces the baseline exactly") {
  hzp::ParallelConfig cfg;  // dp = z1 = z2 = z3 = 1
  auto states = hzp::shard_init<double>(kShape, cfg, 3, false);
  auto baseline = hzp::baseline_init<double>(kShape, 3, false);
  const auto batches = batches_for(1, 2, 4, 50);
  const hzp::AdamParams adam;
  for (int step = 0; step < 3; ++step) {
    const auto l1 = hzp::train_step_hzp(states, kShape, cfg, batches, 4, adam, false);
    const auto l2 =
        hzp::train_step_baseline(baseline, kShape, batches, 4, adam, {1, 1}, false);
    CHECK(l1 == l2);
  }
  CHECK(hzp::gather_params(states, kShape, cfg) == baseline.working);
}

TEST_CASE("sharded training is exact against the baseline in FP64") {
  hzp::ParallelConfig cfg;
  cfg.dp = 4;
  cfg.z1 = 2;
  cfg.z2 = 4;
  cfg.z3 = 2;
  auto states = hzp::shard_init<double>(kShape, cfg, 9, false);
  auto baseline = hzp::baseline_init<double>(kShape, 9, false);
  const auto batches = batches_for(4, 2, 4, 60);
  const hzp::AdamParams adam;
  for (int step = 0; step < 2; ++step) {
    hzp::train_step_hzp(states, kShape, cfg, batches, 4, adam, false);
    hzp::train_step_baseline(baseline, kShape, batches, 4, adam, {4, 4}, false);
  }
  CHECK(hzp::gather_params(states, kShape, cfg) == baseline.working);
}

TEST_CASE("a baseline with the wrong reduction tree diverges") {
  // Same data, same model, but the oracle parameterized with a different
  // summation order must not stay bitwise equal: this guards against the
  // equivalence check being trivially insensitive.
  hzp::ParallelConfig cfg;
  cfg.dp = 4;
  cfg.z2 = 4;
  auto states = hzp::shard_init<double>(kShape, cfg, 9, false);
  auto matched = hzp::baseline_init<double>(kShape, 9, false);
  auto mismatched = hzp::baseline_init<double>(kShape, 9, false);
  const auto batches = batches_for(4, 2, 4, 60);
  const hzp::AdamParams adam;
  for (int step = 0; step < 2; ++step) {
    hzp::train_step_hzp(states, kShape, cfg, batches, 4, adam, false);
    hzp::train_step_baseline(matched, kShape, batches, 4, adam, {4, 4}, false);
    hzp::train_step_baseline(mismatched, kShape, batches, 4, adam, {4, 1}, false);
  }
  CHECK(hzp::gather_params(states, kShape, cfg) == matched.working);
  CHECK(mismatched.working != matched.working);
}

TEST_CASE("mixed precision stays within the verification threshold") {
  hzp::ParallelConfig cfg;
  cfg.dp = 4;
  cfg.z1 = 4;
  cfg.z2 = 2;
  cfg.z3 = 2;
  auto states = hzp::shard_init<float>(kShape, cfg, 5, true);
  auto baseline = hzp::baseline_init<float>(kShape, 5, true);
  hzp::RankBatches<float> batches(4);
  for (int r = 0; r < 4; ++r) {
    for (int mb = 0; mb < 2; ++mb) {
      batches[r].push_back(hzp::seeded_uniform<float>(
          4 * static_cast<std::size_t>(kShape.dims[0]), 70 + 10 * r + mb));
    }
  }
  const hzp::AdamParams adam;
  for (int step = 0; step < 3; ++step) {
    hzp::train_step_hzp(states, kShape, cfg, batches, 4, adam, true);
    hzp::train_step_baseline(baseline, kShape, batches, 4, adam, {4, 2}, true);
  }
  const auto params = hzp::gather_params(states, kShape, cfg);
  for (std::int64_t i = 0; i < kShape.param_count(); ++i) {
    CHECK(std::abs(params[i] - baseline.working[i]) <= 1e-6);
  }
}

TEST_CASE("the default grid enumerates divisor triples") {
  const auto grid = hzp::default_grid({4}, {1, 2});
  // 3 divisors of 4, cubed, times two microbatch counts.
  CHECK(grid.size() == 27 * 2);
  for (const auto& c : grid) {
    CHECK(c.dp % c.z1 == 0);
    CHECK(c.dp % c.z2 == 0);
    CHECK(c.dp % c.z3 == 0);
  }
}

TEST_CASE("verify_equivalence passes its grid and flags injected faults") {
  const auto grid = hzp::default_grid({2}, {2});
  const auto ok = hzp::verify_equivalence(grid, 11, 2, hzp::Precision::Fp64);
  CHECK(ok.all_pass);
  for (const auto& r : ok.results) {
    CHECK(r.pass);
    CHECK(r.max_abs_diff == 0.0);
  }
  const auto bad = hzp::verify_equivalence(grid, 11, 2, hzp::Precision::Fp64,
                                           hzp::AdamParams{}, true);
  CHECK(!bad.all_pass);
}

TEST_CASE("zero steps trivially verify") {
  const auto grid = hzp::default_grid({2}, {1});
  const auto report = hzp::verify_equivalence(grid, 1, 0, hzp::Precision::Fp64);
  CHECK(report.all_pass);
}

TEST_CASE("reports serialize to JSON with per-config entries") {
  const auto grid = hzp::default_grid({2}, {1});
  const auto report = hzp::verify_equivalence(grid, 1, 1, hzp::Precision::Mixed);
  const auto text = hzp::report_to_json(report);
  CHECK(text.find("\"precision\"") != std::string::npos);
  CHECK(text.find("\"max_abs_diff\"") != std::string::npos);
  CHECK(text.find("\"mixed\"") != std::string::npos);
}
