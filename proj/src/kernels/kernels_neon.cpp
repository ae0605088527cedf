/*
 * Copyright 2026 The crossfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "crossfl/kernels/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstdint>
#include <cstring>

namespace crossfl::kernels {
namespace {

// vmulq + vaddq rather than vfmaq: the reference rounds after the product.

void axpy(double* y, double a, const double* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vy = vld1q_f64(y + i);
    vy = vaddq_f64(vy, vmulq_f64(va, vld1q_f64(x + i)));
    vst1q_f64(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void accumulate_weighted(double* acc, const float* x, double w,
                         std::size_t n) {
  const float64x2_t vw = vdupq_n_f64(w);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vx = vcvt_f64_f32(vld1_f32(x + i));
    float64x2_t va = vld1q_f64(acc + i);
    va = vaddq_f64(va, vmulq_f64(vw, vx));
    vst1q_f64(acc + i, va);
  }
  for (; i < n; ++i) acc[i] += w * static_cast<double>(x[i]);
}

void divide_to_f32(float* out, const double* acc, double denom,
                   std::size_t n) {
  const float64x2_t vd = vdupq_n_f64(denom);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1_f32(out + i, vcvt_f32_f64(vdivq_f64(vld1q_f64(acc + i), vd)));
  }
  for (; i < n; ++i) out[i] = static_cast<float>(acc[i] / denom);
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);  // lanes 0, 1
  float64x2_t hi = vdupq_n_f64(0.0);  // lanes 2, 3
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double lane[4];
  vst1q_f64(lane, lo);
  vst1q_f64(lane + 2, hi);
  for (std::size_t l = 0; i < n; ++i, ++l) lane[l] += a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

bool all_finite_f32(const float* x, std::size_t n) {
  const uint32x4_t exp_mask = vdupq_n_u32(0x7f800000u);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t bits = vreinterpretq_u32_f32(vld1q_f32(x + i));
    const uint32x4_t hit = vceqq_u32(vandq_u32(bits, exp_mask), exp_mask);
    if (vmaxvq_u32(hit) != 0) return false;
  }
  for (; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, x + i, sizeof bits);
    if ((bits & 0x7f800000u) == 0x7f800000u) return false;
  }
  return true;
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{"neon",        axpy, accumulate_weighted,
                                 divide_to_f32, dot,  all_finite_f32};
  return &table;
}

}  // namespace crossfl::kernels

#else

namespace crossfl::kernels {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace crossfl::kernels

#endif
