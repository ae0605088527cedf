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
#include <string>
#include <string_view>
#include <vector>

namespace crossfl {

enum class Activation { kRelu, kIdentity, kSoftmax };
enum class LossKind { kMse, kCrossEntropy };
enum class TensorRole { kWeight, kBias };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind l);
std::string_view to_string(TensorRole r);
Activation parse_activation(std::string_view s);
LossKind parse_loss(std::string_view s);
TensorRole parse_role(std::string_view s);

// One dense layer: y = act(x W + b), W is [input_dim, output_dim].
struct LayerDesc {
  std::uint32_t input_dim = 0;
  std::uint32_t output_dim = 0;
  Activation activation = Activation::kIdentity;

  bool operator==(const LayerDesc&) const = default;
};

using Architecture = std::vector<LayerDesc>;

// Throws kSchemaMismatch when layer dims do not chain, a dim is zero, or
// softmax appears anywhere other than a final layer trained with
// cross-entropy (and cross-entropy without a softmax head).
void validate_architecture(const Architecture& arch, LossKind loss);

// Index-based tensor name: "parameter_<index>".
std::string tensor_name(std::size_t index);

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> shape;
  TensorRole role = TensorRole::kWeight;
  // Node names from the layer-tree root down to the owning layer, then the
  // weight slot name.
  std::vector<std::string> layer_path;
  bool updatable = false;

  std::size_t element_count() const;
  bool operator==(const TensorSpec&) const = default;
};

struct ParameterSchema {
  std::vector<TensorSpec> tensors;

  std::size_t total_elements() const;
  // Names, ranks, element counts and layer_path uniqueness; throws
  // kSchemaMismatch.
  void validate() const;
  bool operator==(const ParameterSchema&) const = default;
};

// Layer-tree node naming used for authored models.
inline constexpr std::string_view kTreeContainer = "neural_network";
inline constexpr std::string_view kWeightSlot = "weights";
inline constexpr std::string_view kBiasSlot = "bias";
std::string dense_node_name(std::size_t layer);

// Canonical schema for an MLP: weight_k, bias_k for ascending k. Only the
// final layer is marked updatable.
ParameterSchema schema_for_architecture(const Architecture& arch);

// Throws kSchemaMismatch if `schema` is not what `arch` implies (shapes,
// order, count). Names/paths are checked by ParameterSchema::validate.
void check_schema_matches(const ParameterSchema& schema,
                          const Architecture& arch);

// SHA-256 over the schema's names and shapes; clients present it on Join.
std::string schema_digest(const ParameterSchema& schema);

}  // namespace crossfl
