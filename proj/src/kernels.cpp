// SPDX-License-Identifier: Apache-2.0

#include "hzp/kernels.hpp"

#include <string_view>

namespace hzp::kernels {

namespace {

void add_f32_scalar(float* acc, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += src[i];
}

void add_f64_scalar(double* acc, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += src[i];
}

void bf16_round_scalar(float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = bf16_round(data[i]);
}

const Impl kScalar{"scalar", add_f32_scalar, add_f64_scalar, bf16_round_scalar};

}  // namespace

const Impl& scalar_impl() { return kScalar; }

#if defined(__x86_64__)
const Impl* avx2_impl();  // defined in kernels_avx2.cpp
#else
static const Impl* avx2_impl() { return nullptr; }
#endif

std::vector<const Impl*> available_impls() {
  std::vector<const Impl*> impls{&kScalar};
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) impls.push_back(avx2_impl());
#endif
  return impls;
}

const Impl& active_impl() {
  static const Impl* best = available_impls().back();
  return *best;
}

const Impl* find_impl(const char* name) {
  for (const Impl* impl : available_impls()) {
    if (std::string_view(impl->name) == name) return impl;
  }
  return nullptr;
}

}  // namespace hzp::kernels
