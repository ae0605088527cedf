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
#include <cstdint>
#include <vector>

#include "crossfl/error.hpp"
#include "crossfl/schema.hpp"

namespace crossfl {

// Single-precision tensor, row-major.
struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

// The uniform parameter representation: tensors in canonical schema order.
struct ParameterSet {
  std::vector<Tensor> tensors;

  std::size_t total_elements() const;
  bool operator==(const ParameterSet&) const = default;
};

// Exact bit equality (distinguishes -0.0 from 0.0, compares NaN payloads).
bool bit_equal(const ParameterSet& a, const ParameterSet& b);

bool all_finite(const ParameterSet& p);

// Tensor count, shapes and value lengths against the schema.
bool conforms(const ParameterSet& p, const ParameterSchema& schema);

// Throws `code` naming the first offending tensor.
void check_conforms(const ParameterSet& p, const ParameterSchema& schema,
                    Errc code = Errc::kSchemaMismatch);

// Zero-filled set shaped by `schema`.
ParameterSet zeros_like(const ParameterSchema& schema);

}  // namespace crossfl
