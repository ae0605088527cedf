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

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossfl/parameters.hpp"
#include "crossfl/schema.hpp"

namespace crossfl {

// Emulates an interpreter whose inputs/outputs are maps from generated
// names ("parameter_<k>") to tensors.
struct IndexMapLayout {
  std::unordered_map<std::string, Tensor> entries;
};

struct WeightSlot {
  std::string name;
  Tensor tensor;
};

// Node of a nested model definition. Weights are fixed at construction and
// readable by anyone, but there is no mutator: rewriting weights goes
// through set_in_layer_tree, which rebuilds the affected slots.
class LayerNode {
 public:
  LayerNode(std::string name, bool updatable, std::vector<WeightSlot> weights = {},
            std::vector<LayerNode> children = {});

  const std::string& name() const { return name_; }
  bool updatable() const { return updatable_; }
  std::span<const WeightSlot> weights() const { return weights_; }
  std::span<const LayerNode> children() const { return children_; }

 private:
  friend class LayerTreeWriter;

  std::string name_;
  bool updatable_;
  std::vector<WeightSlot> weights_;
  std::vector<LayerNode> children_;
};

struct LayerTreeLayout {
  LayerNode root{"model", false};
};

// Tree skeleton built from conversion-time layer records: one node per
// distinct path prefix, one zero-filled slot per tensor, `updatable` copied
// from the owning TensorSpec.
LayerTreeLayout build_layer_tree(const ParameterSchema& schema);

// Resolves `path` below `root` to its weight slot; nullptr if absent or
// ambiguous.
const WeightSlot* find_slot(const LayerNode& root, std::span<const std::string> path);

ParameterSet from_index_map(const IndexMapLayout& layout, const ParameterSchema& schema);
IndexMapLayout to_index_map(const ParameterSet& params, const ParameterSchema& schema);

// Gathers every schema tensor by layer_path, frozen nodes included.
ParameterSet from_layer_tree(const LayerTreeLayout& layout, const ParameterSchema& schema);

// Returns a copy of `layout` whose slots at the schema paths hold `params`.
// Node structure, names and updatable flags are untouched.
LayerTreeLayout set_in_layer_tree(const LayerTreeLayout& layout, const ParameterSet& params,
                                  const ParameterSchema& schema);

// Tensor-level access counts for the calling thread.
struct LayoutAccessCounts {
  std::uint64_t index_map_reads = 0;
  std::uint64_t index_map_writes = 0;
  std::uint64_t layer_tree_reads = 0;
  std::uint64_t layer_tree_writes = 0;
};
const LayoutAccessCounts& thread_layout_counts();

struct WeightedUpdate {
  std::string client_id;
  ParameterSet params;
  std::uint64_t num_examples = 0;
};

// Example-weighted mean sum_k(n_k * p_k) / sum_k(n_k) per element, in double
// precision. Updates are accumulated in (client_id, num_examples, bytes)
// order so the result does not depend on the order of `updates`.
// Throws kEmptyUpdateList, kSchemaMismatch, kNonFiniteValue.
std::vector<std::vector<double>> weighted_mean(std::span<const WeightedUpdate> updates);

// weighted_mean cast to single precision. With a schema, every update is
// also checked against it.
ParameterSet aggregate_weighted(std::span<const WeightedUpdate> updates);
ParameterSet aggregate_weighted(std::span<const WeightedUpdate> updates,
                                const ParameterSchema& schema);

}  // namespace crossfl
