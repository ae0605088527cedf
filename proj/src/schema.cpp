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

#include "crossfl/schema.hpp"

#include <numeric>
#include <set>

#include "crossfl/error.hpp"
#include "crossfl/model_package.hpp"

namespace crossfl {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
    case Activation::kSoftmax: return "softmax";
  }
  return "?";
}

std::string_view to_string(LossKind l) {
  return l == LossKind::kMse ? "mse" : "cross_entropy";
}

std::string_view to_string(TensorRole r) {
  return r == TensorRole::kWeight ? "weight" : "bias";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  if (s == "softmax") return Activation::kSoftmax;
  throw Error(Errc::kSchemaMismatch, "unknown activation '" + std::string(s) + "'");
}

LossKind parse_loss(std::string_view s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "cross_entropy") return LossKind::kCrossEntropy;
  throw Error(Errc::kSchemaMismatch, "unknown loss '" + std::string(s) + "'");
}

TensorRole parse_role(std::string_view s) {
  if (s == "weight") return TensorRole::kWeight;
  if (s == "bias") return TensorRole::kBias;
  throw Error(Errc::kSchemaMismatch, "unknown tensor role '" + std::string(s) + "'");
}

void validate_architecture(const Architecture& arch, LossKind loss) {
  if (arch.empty()) throw Error(Errc::kSchemaMismatch, "architecture has no layers");
  for (std::size_t k = 0; k < arch.size(); ++k) {
    const LayerDesc& layer = arch[k];
    const std::string where = "architecture[" + std::to_string(k) + "]";
    if (layer.input_dim == 0 || layer.output_dim == 0) {
      throw Error(Errc::kSchemaMismatch, where + " has a zero dimension");
    }
    if (k + 1 < arch.size() && layer.output_dim != arch[k + 1].input_dim) {
      throw Error(Errc::kSchemaMismatch,
                  where + ".output_dim does not chain into the next layer");
    }
    const bool last = k + 1 == arch.size();
    if (layer.activation == Activation::kSoftmax &&
        (!last || loss != LossKind::kCrossEntropy)) {
      throw Error(Errc::kSchemaMismatch,
                  where + ": softmax is only allowed on a cross_entropy head");
    }
  }
  if (loss == LossKind::kCrossEntropy &&
      arch.back().activation != Activation::kSoftmax) {
    throw Error(Errc::kSchemaMismatch, "cross_entropy requires a softmax head");
  }
}

std::string tensor_name(std::size_t index) {
  return "parameter_" + std::to_string(index);
}

std::string dense_node_name(std::size_t layer) {
  return "dense_" + std::to_string(layer);
}

std::size_t TensorSpec::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, std::uint32_t d) { return acc * d; });
}

std::size_t ParameterSchema::total_elements() const {
  std::size_t total = 0;
  for (const TensorSpec& t : tensors) total += t.element_count();
  return total;
}

void ParameterSchema::validate() const {
  std::set<std::vector<std::string>> paths;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const TensorSpec& t = tensors[k];
    const std::string where = "schema.tensors[" + std::to_string(k) + "]";
    if (t.name != tensor_name(k)) {
      throw Error(Errc::kSchemaMismatch,
                  where + ".name is '" + t.name + "', expected '" + tensor_name(k) + "'");
    }
    if (t.shape.empty() || t.shape.size() > 2) {
      throw Error(Errc::kSchemaMismatch, where + ".shape must have 1 or 2 dimensions");
    }
    for (std::uint32_t d : t.shape) {
      if (d == 0) throw Error(Errc::kSchemaMismatch, where + ".shape has a zero dimension");
    }
    if (t.layer_path.empty()) {
      throw Error(Errc::kSchemaMismatch, where + ".layer_path is empty");
    }
    if (!paths.insert(t.layer_path).second) {
      throw Error(Errc::kSchemaMismatch, where + ".layer_path is not unique");
    }
  }
}

ParameterSchema schema_for_architecture(const Architecture& arch) {
  ParameterSchema schema;
  for (std::size_t k = 0; k < arch.size(); ++k) {
    const bool updatable = k + 1 == arch.size();
    const std::string node = dense_node_name(k);
    schema.tensors.push_back(TensorSpec{
        tensor_name(schema.tensors.size()),
        {arch[k].input_dim, arch[k].output_dim},
        TensorRole::kWeight,
        {std::string(kTreeContainer), node, std::string(kWeightSlot)},
        updatable});
    schema.tensors.push_back(TensorSpec{
        tensor_name(schema.tensors.size()),
        {arch[k].output_dim},
        TensorRole::kBias,
        {std::string(kTreeContainer), node, std::string(kBiasSlot)},
        updatable});
  }
  return schema;
}

void check_schema_matches(const ParameterSchema& schema, const Architecture& arch) {
  if (schema.tensors.size() != 2 * arch.size()) {
    throw Error(Errc::kSchemaMismatch,
                "schema.tensors has " + std::to_string(schema.tensors.size()) +
                    " entries, architecture implies " + std::to_string(2 * arch.size()));
  }
  for (std::size_t k = 0; k < arch.size(); ++k) {
    const TensorSpec& w = schema.tensors[2 * k];
    const TensorSpec& b = schema.tensors[2 * k + 1];
    const std::vector<std::uint32_t> wshape{arch[k].input_dim, arch[k].output_dim};
    const std::vector<std::uint32_t> bshape{arch[k].output_dim};
    if (w.role != TensorRole::kWeight || w.shape != wshape) {
      throw Error(Errc::kSchemaMismatch,
                  "schema.tensors[" + std::to_string(2 * k) + "] is not layer " +
                      std::to_string(k) + "'s weight");
    }
    if (b.role != TensorRole::kBias || b.shape != bshape) {
      throw Error(Errc::kSchemaMismatch,
                  "schema.tensors[" + std::to_string(2 * k + 1) + "] is not layer " +
                      std::to_string(k) + "'s bias");
    }
  }
}

std::string schema_digest(const ParameterSchema& schema) {
  std::string canon;
  for (const TensorSpec& t : schema.tensors) {
    canon += t.name;
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
      canon += (i == 0 ? ':' : 'x');
      canon += std::to_string(t.shape[i]);
    }
    canon += ';';
  }
  return sha256_hex(canon);
}

}  // namespace crossfl
