// SPDX-License-Identifier: Apache-2.0
//
// AVX2 kernel variants. This translation unit is compiled with -mavx2; it is
// only reached through the runtime dispatch in kernels.cpp.

#include "hzp/kernels.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

namespace hzp::kernels {

namespace {

void add_f32_avx2(float* acc, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 a = _mm256_loadu_ps(acc + i);
    __m256 b = _mm256_loadu_ps(src + i);
    _mm256_storeu_ps(acc + i, _mm256_add_ps(a, b));
  }
  for (; i < n; ++i) acc[i] += src[i];
}

void add_f64_avx2(double* acc, const double* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d a = _mm256_loadu_pd(acc + i);
    __m256d b = _mm256_loadu_pd(src + i);
    _mm256_storeu_pd(acc + i, _mm256_add_pd(a, b));
  }
  for (; i < n; ++i) acc[i] += src[i];
}

void bf16_round_avx2(float* data, std::size_t n) {
  const __m256i exp_mask = _mm256_set1_epi32(0x7F800000);
  const __m256i mant_mask = _mm256_set1_epi32(0x007FFFFF);
  const __m256i quiet_bit = _mm256_set1_epi32(0x00400000);
  const __m256i high_mask = _mm256_set1_epi32(static_cast<int>(0xFFFF0000u));
  const __m256i bias = _mm256_set1_epi32(0x7FFF);
  const __m256i one = _mm256_set1_epi32(1);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256i bits = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
    // Finite lane: bits += 0x7FFF + ((bits >> 16) & 1), then truncate.
    __m256i lsb = _mm256_and_si256(_mm256_srli_epi32(bits, 16), one);
    __m256i rounded = _mm256_add_epi32(bits, _mm256_add_epi32(bias, lsb));
    rounded = _mm256_and_si256(rounded, high_mask);
    // Inf/NaN lane: quiet any NaN payload, then truncate.
    __m256i is_special = _mm256_cmpeq_epi32(_mm256_and_si256(bits, exp_mask),
                                            exp_mask);
    __m256i has_payload = _mm256_cmpgt_epi32(_mm256_and_si256(bits, mant_mask),
                                             _mm256_setzero_si256());
    __m256i quieted = _mm256_or_si256(
        bits, _mm256_and_si256(has_payload, quiet_bit));
    quieted = _mm256_and_si256(quieted, high_mask);
    __m256i out = _mm256_blendv_epi8(rounded, quieted, is_special);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(data + i), out);
  }
  for (; i < n; ++i) data[i] = bf16_round(data[i]);
}

const Impl kAvx2{"avx2", add_f32_avx2, add_f64_avx2, bf16_round_avx2};

}  // namespace

const Impl* avx2_impl() { return &kAvx2; }

}  // namespace hzp::kernels

#endif  // __x86_64__
