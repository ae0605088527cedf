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

#include "crossfl/param_space.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "crossfl/kernels/kernels.hpp"

namespace crossfl {
namespace {

thread_local LayoutAccessCounts t_counts;

std::string join_path(std::span<const std::string> path) {
  std::string out;
  for (const std::string& p : path) {
    if (!out.empty()) out += '/';
    out += p;
  }
  return out;
}

struct Accumulated {
  std::vector<std::vector<double>> sums;
  double total_examples = 0.0;
};

int compare_values(const ParameterSet& a, const ParameterSet& b) {
  for (std::size_t k = 0; k < a.tensors.size(); ++k) {
    const auto& x = a.tensors[k].values;
    const auto& y = b.tensors[k].values;
    const int c = std::memcmp(x.data(), y.data(), x.size() * sizeof(float));
    if (c != 0) return c;
  }
  return 0;
}

Accumulated accumulate(std::span<const WeightedUpdate> updates) {
  if (updates.empty()) throw Error(Errc::kEmptyUpdateList, "no updates to aggregate");
  const ParameterSet& first = updates.front().params;
  for (const WeightedUpdate& u : updates) {
    if (u.num_examples == 0) {
      throw Error(Errc::kInvalidArgument, "update from '" + u.client_id + "' has num_examples 0");
    }
    if (u.params.tensors.size() != first.tensors.size()) {
      throw Error(Errc::kSchemaMismatch, "update from '" + u.client_id + "' has a different tensor count");
    }
    for (std::size_t k = 0; k < first.tensors.size(); ++k) {
      const Tensor& t = u.params.tensors[k];
      if (t.shape != first.tensors[k].shape || t.values.size() != first.tensors[k].values.size()) {
        throw Error(Errc::kSchemaMismatch,
                    "update from '" + u.client_id + "' differs in " + tensor_name(k) + " shape");
      }
    }
    if (!all_finite(u.params)) {
      throw Error(Errc::kNonFiniteValue, "update from '" + u.client_id + "' holds NaN/Inf");
    }
  }

  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const WeightedUpdate& x = updates[a];
    const WeightedUpdate& y = updates[b];
    if (x.client_id != y.client_id) return x.client_id < y.client_id;
    if (x.num_examples != y.num_examples) return x.num_examples < y.num_examples;
    return compare_values(x.params, y.params) < 0;
  });

  const auto& kern = kernels::active();
  Accumulated acc;
  acc.sums.reserve(first.tensors.size());
  for (const Tensor& t : first.tensors) acc.sums.emplace_back(t.values.size(), 0.0);
  for (std::size_t idx : order) {
    const WeightedUpdate& u = updates[idx];
    const double w = static_cast<double>(u.num_examples);
    acc.total_examples += w;
    for (std::size_t k = 0; k < acc.sums.size(); ++k) {
      kern.accumulate_weighted(acc.sums[k].data(), u.params.tensors[k].values.data(), w,
                               acc.sums[k].size());
    }
  }
  return acc;
}

}  // namespace

// Writes slot tensors in place on a private copy of the tree.
class LayerTreeWriter {
 public:
  static WeightSlot* find_mutable(LayerNode& root, std::span<const std::string> path) {
    const WeightSlot* slot = find_slot(root, path);
    return const_cast<WeightSlot*>(slot);
  }
  static void add_path(LayerNode& root, const TensorSpec& spec) {
    LayerNode* node = &root;
    const auto& path = spec.layer_path;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      auto it = std::find_if(node->children_.begin(), node->children_.end(),
                             [&](const LayerNode& c) { return c.name() == path[i]; });
      if (it == node->children_.end()) {
        node->children_.emplace_back(path[i], false);
        it = std::prev(node->children_.end());
      }
      node = &*it;
    }
    if (spec.updatable) node->updatable_ = true;
    node->weights_.push_back(
        WeightSlot{path.back(), Tensor{spec.shape, std::vector<float>(spec.element_count(), 0.0f)}});
  }
};

LayerNode::LayerNode(std::string name, bool updatable, std::vector<WeightSlot> weights,
                     std::vector<LayerNode> children)
    : name_(std::move(name)),
      updatable_(updatable),
      weights_(std::move(weights)),
      children_(std::move(children)) {}

LayerTreeLayout build_layer_tree(const ParameterSchema& schema) {
  LayerTreeLayout layout;
  for (const TensorSpec& spec : schema.tensors) LayerTreeWriter::add_path(layout.root, spec);
  return layout;
}

const WeightSlot* find_slot(const LayerNode& root, std::span<const std::string> path) {
  if (path.empty()) return nullptr;
  const LayerNode* node = &root;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const LayerNode* next = nullptr;
    for (const LayerNode& child : node->children()) {
      if (child.name() != path[i]) continue;
      if (next != nullptr) return nullptr;  // ambiguous
      next = &child;
    }
    if (next == nullptr) return nullptr;
    node = next;
  }
  const WeightSlot* found = nullptr;
  for (const WeightSlot& slot : node->weights()) {
    if (slot.name != path.back()) continue;
    if (found != nullptr) return nullptr;
    found = &slot;
  }
  return found;
}

ParameterSet from_index_map(const IndexMapLayout& layout, const ParameterSchema& schema) {
  for (const auto& [name, tensor] : layout.entries) {
    const bool known = std::any_of(schema.tensors.begin(), schema.tensors.end(),
                                   [&](const TensorSpec& s) { return s.name == name; });
    if (!known) throw Error(Errc::kUnknownName, "index map key '" + name + "'");
  }
  ParameterSet p;
  p.tensors.reserve(schema.tensors.size());
  for (const TensorSpec& spec : schema.tensors) {
    const auto it = layout.entries.find(spec.name);
    if (it == layout.entries.end()) throw Error(Errc::kMissingName, spec.name);
    if (it->second.shape != spec.shape || it->second.values.size() != spec.element_count()) {
      throw Error(Errc::kShapeMismatch, spec.name);
    }
    p.tensors.push_back(it->second);
    ++t_counts.index_map_reads;
  }
  return p;
}

IndexMapLayout to_index_map(const ParameterSet& params, const ParameterSchema& schema) {
  check_conforms(params, schema, Errc::kShapeMismatch);
  IndexMapLayout layout;
  for (std::size_t k = 0; k < schema.tensors.size(); ++k) {
    layout.entries.emplace(schema.tensors[k].name, params.tensors[k]);
    ++t_counts.index_map_writes;
  }
  return layout;
}

ParameterSet from_layer_tree(const LayerTreeLayout& layout, const ParameterSchema& schema) {
  ParameterSet p;
  p.tensors.reserve(schema.tensors.size());
  for (const TensorSpec& spec : schema.tensors) {
    const WeightSlot* slot = find_slot(layout.root, spec.layer_path);
    if (slot == nullptr) throw Error(Errc::kPathNotFound, join_path(spec.layer_path));
    if (slot->tensor.shape != spec.shape || slot->tensor.values.size() != spec.element_count()) {
      throw Error(Errc::kShapeMismatch, join_path(spec.layer_path));
    }
    p.tensors.push_back(slot->tensor);
    ++t_counts.layer_tree_reads;
  }
  return p;
}

LayerTreeLayout set_in_layer_tree(const LayerTreeLayout& layout, const ParameterSet& params,
                                  const ParameterSchema& schema) {
  if (params.tensors.size() != schema.tensors.size()) {
    throw Error(Errc::kShapeMismatch, "parameter set has " + std::to_string(params.tensors.size()) +
                                          " tensors, schema has " +
                                          std::to_string(schema.tensors.size()));
  }
  LayerTreeLayout out = layout;
  for (std::size_t k = 0; k < schema.tensors.size(); ++k) {
    const TensorSpec& spec = schema.tensors[k];
    WeightSlot* slot = LayerTreeWriter::find_mutable(out.root, spec.layer_path);
    if (slot == nullptr) throw Error(Errc::kPathNotFound, join_path(spec.layer_path));
    const Tensor& src = params.tensors[k];
    if (src.shape != slot->tensor.shape || src.values.size() != slot->tensor.values.size() ||
        src.shape != spec.shape) {
      throw Error(Errc::kShapeMismatch, join_path(spec.layer_path));
    }
    slot->tensor.values = src.values;
    ++t_counts.layer_tree_writes;
  }
  return out;
}

const LayoutAccessCounts& thread_layout_counts() { return t_counts; }

std::vector<std::vector<double>> weighted_mean(std::span<const WeightedUpdate> updates) {
  Accumulated acc = accumulate(updates);
  for (auto& tensor : acc.sums) {
    for (double& v : tensor) v /= acc.total_examples;
  }
  return std::move(acc.sums);
}

ParameterSet aggregate_weighted(std::span<const WeightedUpdate> updates) {
  const Accumulated acc = accumulate(updates);
  const auto& kern = kernels::active();
  ParameterSet out;
  out.tensors.reserve(acc.sums.size());
  for (std::size_t k = 0; k < acc.sums.size(); ++k) {
    Tensor t{updates.front().params.tensors[k].shape, std::vector<float>(acc.sums[k].size())};
    kern.divide_to_f32(t.values.data(), acc.sums[k].data(), acc.total_examples, t.values.size());
    out.tensors.push_back(std::move(t));
  }
  return out;
}

ParameterSet aggregate_weighted(std::span<const WeightedUpdate> updates,
                                const ParameterSchema& schema) {
  for (const WeightedUpdate& u : updates) check_conforms(u.params, schema);
  return aggregate_weighted(updates);
}

}  // namespace crossfl
