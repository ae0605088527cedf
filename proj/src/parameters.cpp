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

#include "crossfl/parameters.hpp"

#include <cstring>
#include <numeric>

#include "crossfl/kernels/kernels.hpp"

namespace crossfl {

std::size_t Tensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, std::uint32_t d) { return acc * d; });
}

std::size_t ParameterSet::total_elements() const {
  std::size_t total = 0;
  for (const Tensor& t : tensors) total += t.values.size();
  return total;
}

bool bit_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t k = 0; k < a.tensors.size(); ++k) {
    const Tensor& x = a.tensors[k];
    const Tensor& y = b.tensors[k];
    if (x.shape != y.shape || x.values.size() != y.values.size()) return false;
    if (!x.values.empty() &&
        std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

bool all_finite(const ParameterSet& p) {
  const auto& k = kernels::active();
  for (const Tensor& t : p.tensors) {
    if (!k.all_finite_f32(t.values.data(), t.values.size())) return false;
  }
  return true;
}

bool conforms(const ParameterSet& p, const ParameterSchema& schema) {
  if (p.tensors.size() != schema.tensors.size()) return false;
  for (std::size_t k = 0; k < p.tensors.size(); ++k) {
    const Tensor& t = p.tensors[k];
    if (t.shape != schema.tensors[k].shape) return false;
    if (t.values.size() != schema.tensors[k].element_count()) return false;
  }
  return true;
}

void check_conforms(const ParameterSet& p, const ParameterSchema& schema, Errc code) {
  if (p.tensors.size() != schema.tensors.size()) {
    throw Error(code, "parameter set has " + std::to_string(p.tensors.size()) +
                          " tensors, schema has " + std::to_string(schema.tensors.size()));
  }
  for (std::size_t k = 0; k < p.tensors.size(); ++k) {
    const Tensor& t = p.tensors[k];
    if (t.shape != schema.tensors[k].shape ||
        t.values.size() != schema.tensors[k].element_count()) {
      throw Error(code, "tensor " + schema.tensors[k].name + " does not match its schema shape");
    }
  }
}

ParameterSet zeros_like(const ParameterSchema& schema) {
  ParameterSet p;
  p.tensors.reserve(schema.tensors.size());
  for (const TensorSpec& spec : schema.tensors) {
    p.tensors.push_back(Tensor{spec.shape, std::vector<float>(spec.element_count(), 0.0f)});
  }
  return p;
}

}  // namespace crossfl
