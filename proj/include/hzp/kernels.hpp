// SPDX-License-Identifier: Apache-2.0
//
// Elementwise kernels used by the collective reductions and the training
// paths: in-place accumulation and BF16 round-to-nearest-even emulation.
// Scalar reference implementations plus an AVX2 variant selected at runtime;
// all variants are bit-identical to the scalar reference.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hzp::kernels {

struct Impl {
  const char* name;
  void (*add_f32)(float* acc, const float* src, std::size_t n);
  void (*add_f64)(double* acc, const double* src, std::size_t n);
  void (*bf16_round_f32)(float* data, std::size_t n);
};

// Scalar reference kernels (always available).
const Impl& scalar_impl();

// Best implementation for the running CPU.
const Impl& active_impl();

// All implementations usable on this CPU (scalar first).
std::vector<const Impl*> available_impls();

// Lookup by name ("scalar", "avx2"); nullptr if unknown or unsupported here.
const Impl* find_impl(const char* name);

// Scalar helper: round an FP32 value to the nearest BF16-representable value
// (8-bit mantissa, round-to-nearest-even). NaN payloads are preserved quiet.
inline float bf16_round(float x) {
  std::uint32_t bits;
  __builtin_memcpy(&bits, &x, 4);
  if ((bits & 0x7F800000u) == 0x7F800000u) {
    if (bits & 0x007FFFFFu) bits |= 0x00400000u;  // quiet NaN
    bits &= 0xFFFF0000u;
  } else {
    bits += 0x7FFFu + ((bits >> 16) & 1u);
    bits &= 0xFFFF0000u;
  }
  float out;
  __builtin_memcpy(&out, &bits, 4);
  return out;
}

}  // namespace hzp::kernels
