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

#pragma once

#include <cstddef>
#include <string_view>

namespace crossfl::kernels {

// Data-parallel inner loops shared by aggregation and training.
//
// Every variant of every kernel produces results bit-identical to the scalar
// reference. Element-wise kernels get this for free (one rounding per lane,
// no FMA). The dot product uses a fixed four-lane blocked summation order in
// the reference as well, so the vector variants reproduce it exactly.
struct KernelTable {
  std::string_view name;

  // y[i] += a * x[i]
  void (*axpy)(double* y, double a, const double* x, std::size_t n);

  // acc[i] += w * double(x[i])
  void (*accumulate_weighted)(double* acc, const float* x, double w,
                              std::size_t n);

  // out[i] = float(acc[i] / denom)
  void (*divide_to_f32)(float* out, const double* acc, double denom,
                        std::size_t n);

  // Lanes l = i mod 4 are summed separately in index order, then combined as
  // (s0 + s1) + (s2 + s3).
  double (*dot)(const double* a, const double* b, std::size_t n);

  // True when no element is NaN or infinite.
  bool (*all_finite_f32)(const float* x, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Kernel table chosen once per process: the best supported variant, unless
// CROSSFL_KERNELS=scalar|avx2|neon asks for a specific one.
const KernelTable& active();

}  // namespace crossfl::kernels
