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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <type_traits>

#include "crossfl/param_space.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crossfl;
using testutil::error_code_of;

namespace {

ParameterSchema two_tensor_schema() {
  // [2] then [1]
  ParameterSchema s;
  s.tensors.push_back({"parameter_0", {2}, TensorRole::kWeight, {"neural_network", "dense_0", "weights"}, false});
  s.tensors.push_back({"parameter_1", {1}, TensorRole::kBias, {"neural_network", "dense_0", "bias"}, true});
  return s;
}

}  // namespace

TEST_CASE("index map: definitional mapping and errors") {
  const ParameterSchema s = two_tensor_schema();
  IndexMapLayout layout;
  layout.entries["parameter_0"] = Tensor{{2}, {1.0f, 2.0f}};
  layout.entries["parameter_1"] = Tensor{{1}, {3.0f}};
  const ParameterSet p = from_index_map(layout, s);
  REQUIRE(p.tensors.size() == 2);
  CHECK(p.tensors[0].values == std::vector<float>{1.0f, 2.0f});
  CHECK(p.tensors[1].values == std::vector<float>{3.0f});

  IndexMapLayout missing = layout;
  missing.entries.erase("parameter_1");
  CHECK(error_code_of([&] { from_index_map(missing, s); }) == Errc::kMissingName);

  IndexMapLayout extra = layout;
  extra.entries["weights"] = Tensor{{1}, {0.0f}};
  CHECK(error_code_of([&] { from_index_map(extra, s); }) == Errc::kUnknownName);

  IndexMapLayout bad_shape = layout;
  bad_shape.entries["parameter_0"] = Tensor{{3}, {1.0f, 2.0f, 3.0f}};
  CHECK(error_code_of([&] { from_index_map(bad_shape, s); }) == Errc::kShapeMismatch);

  CHECK(to_index_map(ParameterSet{}, ParameterSchema{}).entries.empty());
  const ParameterSchema mlp = schema_for_architecture(testutil::small_mlp(3, 4, 1));
  const IndexMapLayout m = to_index_map(zeros_like(mlp), mlp);
  CHECK(m.entries.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(m.entries.count("parameter_" + std::to_string(k)) == 1);
}

TEST_CASE("layer tree: paths resolve, frozen layers included, no public mutator") {
  static_assert(!std::is_assignable_v<decltype((std::declval<const LayerNode&>().weights()[0].tensor)), Tensor>,
                "weights must not be writable through the node API");
  const ParameterSchema s = schema_for_architecture(testutil::small_mlp(3, 4, 2));
  const LayerTreeLayout t0 = build_layer_tree(s);
  for (const TensorSpec& spec : s.tensors) {
    const WeightSlot* slot = find_slot(t0.root, spec.layer_path);
    REQUIRE(slot != nullptr);
    CHECK(slot->tensor.shape == spec.shape);
  }
  // The hidden layer is frozen, the head is updatable.
  const LayerNode& container = t0.root.children()[0];
  CHECK(container.name() == "neural_network");
  REQUIRE(container.children().size() == 2);
  CHECK_FALSE(container.children()[0].updatable());
  CHECK(container.children()[1].updatable());

  std::mt19937_64 rng(3);
  const ParameterSet p = testutil::random_params(s, rng);
  const LayerTreeLayout t1 = set_in_layer_tree(t0, p, s);
  const ParameterSet back = from_layer_tree(t1, s);
  CHECK(bit_equal(back, p));
  // Frozen layer weights were written and read via navigation.
  CHECK(back.tensors[0].values == p.tensors[0].values);
  // Structure and flags unchanged; the input tree is untouched.
  CHECK(t1.root.children()[0].children()[0].updatable() == false);
  CHECK(t1.root.children()[0].children()[0].name() == t0.root.children()[0].children()[0].name());
  CHECK(bit_equal(from_layer_tree(t0, s), zeros_like(s)));
}

TEST_CASE("layer tree errors") {
  const ParameterSchema s = schema_for_architecture(testutil::small_mlp(3, 4, 1));
  const LayerTreeLayout t = build_layer_tree(s);
  ParameterSchema wrong = s;
  wrong.tensors[0].layer_path = {"dense_9"};
  CHECK(error_code_of([&] { from_layer_tree(t, wrong); }) == Errc::kPathNotFound);
  CHECK(error_code_of([&] { set_in_layer_tree(t, zeros_like(s), wrong); }) == Errc::kPathNotFound);

  ParameterSet bad = zeros_like(s);
  bad.tensors[2] = Tensor{{1, 4}, std::vector<float>(4)};
  CHECK(error_code_of([&] { set_in_layer_tree(t, bad, s); }) == Errc::kShapeMismatch);

  ParameterSchema reshaped = s;
  reshaped.tensors[1].shape = {5};
  CHECK(error_code_of([&] { from_layer_tree(t, reshaped); }) == Errc::kShapeMismatch);
}

TEST_CASE("property: both layouts are bit-exact round trips") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const ParameterSchema s =
        schema_for_architecture(testutil::small_mlp(1 + rng() % 6, 1 + rng() % 10, 1 + rng() % 4));
    ParameterSet p = testutil::random_params(s, rng, 100.0f);
    p.tensors[0].values[0] = -0.0f;
    CHECK(bit_equal(from_index_map(to_index_map(p, s), s), p));
    CHECK(bit_equal(from_layer_tree(set_in_layer_tree(build_layer_tree(s), p, s), s), p));
  }
}

TEST_CASE("layout access counters track tensor reads and writes") {
  const ParameterSchema s = schema_for_architecture(testutil::small_mlp(2, 3, 1));
  const LayoutAccessCounts before = thread_layout_counts();
  const LayerTreeLayout t = set_in_layer_tree(build_layer_tree(s), zeros_like(s), s);
  from_layer_tree(t, s);
  from_index_map(to_index_map(zeros_like(s), s), s);
  const LayoutAccessCounts& after = thread_layout_counts();
  CHECK(after.layer_tree_writes - before.layer_tree_writes == 4);
  CHECK(after.layer_tree_reads - before.layer_tree_reads == 4);
  CHECK(after.index_map_writes - before.index_map_writes == 4);
  CHECK(after.index_map_reads - before.index_map_reads == 4);
}

TEST_CASE("aggregate_weighted: hand examples and errors") {
  const ParameterSchema s{{{"parameter_0", {2}, TensorRole::kWeight, {"n", "d", "w"}, true}}};
  const std::vector<WeightedUpdate> ups{{"a", ParameterSet{{Tensor{{2}, {1.0f, 3.0f}}}}, 1},
                                        {"b", ParameterSet{{Tensor{{2}, {5.0f, 7.0f}}}}, 3}};
  // (1 + 15) / 4, (3 + 21) / 4
  CHECK(aggregate_weighted(ups, s).tensors[0].values == std::vector<float>{4.0f, 6.0f});
  CHECK(bit_equal(aggregate_weighted(std::span(ups.data(), 1)), ups[0].params));

  CHECK(error_code_of([] { aggregate_weighted(std::vector<WeightedUpdate>{}); }) == Errc::kEmptyUpdateList);

  auto mismatched = ups;
  mismatched[1].params.tensors[0] = Tensor{{3}, {1.0f, 2.0f, 3.0f}};
  CHECK(error_code_of([&] { aggregate_weighted(mismatched); }) == Errc::kSchemaMismatch);

  auto poisoned = ups;
  poisoned[0].params.tensors[0].values[1] = std::numeric_limits<float>::infinity();
  CHECK(error_code_of([&] { aggregate_weighted(poisoned); }) == Errc::kNonFiniteValue);

  auto zero = ups;
  zero[0].num_examples = 0;
  CHECK(error_code_of([&] { aggregate_weighted(zero); }) == Errc::kInvalidArgument);

  const ParameterSchema other{{{"parameter_0", {1, 2}, TensorRole::kWeight, {"n", "d", "w"}, true}}};
  CHECK(error_code_of([&] { aggregate_weighted(ups, other); }) == Errc::kSchemaMismatch);
}

TEST_CASE("property: weighted mean matches a brute-force oracle and is order-independent") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t clients = 1 + rng() % 5;
    const std::uint32_t len = 1 + rng() % 1000;
    const ParameterSchema s{{{"parameter_0", {len}, TensorRole::kWeight, {"n", "d", "w"}, true}}};
    std::vector<WeightedUpdate> ups;
    for (std::size_t c = 0; c < clients; ++c) {
      ups.push_back({"c" + std::to_string(c), testutil::random_params(s, rng), 1 + rng() % 500});
    }
    const auto mean = weighted_mean(ups);
    const auto oracle = oracles::weighted_mean(ups, 0);
    for (std::size_t i = 0; i < len; ++i) {
      const long double o = oracle[i];
      const double rel = o == 0.0L ? std::fabs(mean[0][i])
                                   : static_cast<double>(std::fabs((mean[0][i] - o) / o));
      worst = std::max(worst, rel);
    }
    const ParameterSet agg = aggregate_weighted(ups);
    for (std::size_t i = 0; i < len; ++i) CHECK(agg.tensors[0].values[i] == static_cast<float>(mean[0][i]));

    auto shuffled = ups;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(bit_equal(aggregate_weighted(shuffled), agg));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("property: all-equal updates aggregate to themselves") {
  std::mt19937_64 rng(5);
  const ParameterSchema s = schema_for_architecture(testutil::small_mlp(4, 7, 2));
  for (int trial = 0; trial < 50; ++trial) {
    const ParameterSet p = testutil::random_params(s, rng, 50.0f);
    std::vector<WeightedUpdate> ups;
    for (int c = 0; c < 1 + trial % 5; ++c) ups.push_back({"c" + std::to_string(c), p, 1 + rng() % 1000});
    CHECK(bit_equal(aggregate_weighted(ups, s), p));
  }
}

TEST_CASE("cross-platform aggregation equals canonical aggregation bit for bit") {
  std::mt19937_64 rng(99);
  const ParameterSchema s = schema_for_architecture(testutil::small_mlp(4, 8, 1));
  for (int trial = 0; trial < 20; ++trial) {
    const ParameterSet a = testutil::random_params(s, rng);
    const ParameterSet b = testutil::random_params(s, rng);
    const std::vector<WeightedUpdate> canonical{{"android", a, 120}, {"ios", b, 80}};
    const std::vector<WeightedUpdate> via_layouts{
        {"android", from_index_map(to_index_map(a, s), s), 120},
        {"ios", from_layer_tree(set_in_layer_tree(build_layer_tree(s), b, s), s), 80}};
    CHECK(bit_equal(aggregate_weighted(canonical, s), aggregate_weighted(via_layouts, s)));
  }
}
