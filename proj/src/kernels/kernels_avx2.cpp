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

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include <cstdint>
#include <cstring>

namespace crossfl::kernels {
namespace {

void axpy(double* y, double a, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void accumulate_weighted(double* acc, const float* x, double w,
                         std::size_t n) {
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    __m256d va = _mm256_loadu_pd(acc + i);
    va = _mm256_add_pd(va, _mm256_mul_pd(vw, vx));
    _mm256_storeu_pd(acc + i, va);
  }
  for (; i < n; ++i) acc[i] += w * static_cast<double>(x[i]);
}

void divide_to_f32(float* out, const double* acc, double denom,
                   std::size_t n) {
  const __m256d vd = _mm256_set1_pd(denom);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d q = _mm256_div_pd(_mm256_loadu_pd(acc + i), vd);
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(q));
  }
  for (; i < n; ++i) out[i] = static_cast<float>(acc[i] / denom);
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d vacc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vacc = _mm256_add_pd(
        vacc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, vacc);
  for (std::size_t l = 0; i < n; ++i, ++l) lane[l] += a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

bool all_finite_f32(const float* x, std::size_t n) {
  const __m256i exp_mask = _mm256_set1_epi32(0x7f800000);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i bits =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
    const __m256i hit =
        _mm256_cmpeq_epi32(_mm256_and_si256(bits, exp_mask), exp_mask);
    if (_mm256_movemask_epi8(hit) != 0) return false;
  }
  for (; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, x + i, sizeof bits);
    if ((bits & 0x7f800000u) == 0x7f800000u) return false;
  }
  return true;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2",        axpy, accumulate_weighted,
                                 divide_to_f32, dot,  all_finite_f32};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace crossfl::kernels

#else

namespace crossfl::kernels {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace crossfl::kernels

#endif
