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

#include <cmath>
#include <random>

#include "crossfl/rng.hpp"
#include "crossfl/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crossfl;
using testutil::error_code_of;
using oracles::random_dataset;

namespace {

ParameterSet linear_params(float w, float b) {
  return ParameterSet{{Tensor{{1, 1}, {w}}, Tensor{{1}, {b}}}};
}

}  // namespace

TEST_CASE("PCG32 matches the reference output stream") {
  // pcg32_random_r with state seeded by pcg32_srandom_r(42, 54): the first
  // six outputs of the reference demo program.
  Pcg32 rng(42, 54);
  const std::uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e};
  for (std::uint32_t e : expected) CHECK(rng.next() == e);
}

TEST_CASE("hand-computed SGD step on a linear model") {
  MlpModel m({{1, 1, Activation::kIdentity}}, LossKind::kMse);
  m.restore(linear_params(1.0f, 0.0f));
  Dataset d;
  d.x = Matrix(1, 1);
  d.x.data = {1.0};
  d.y = Matrix(1, 1);
  d.y.data = {0.0};
  const TrainStats s = m.train(d, {1, 1, 0.1, 0});
  // d/dw (w x - y)^2 = 2 (w x - y) x = 2 ; w = 1 - 0.2, b = 0 - 0.2
  const ParameterSet p = m.parameters();
  CHECK(p.tensors[0].values[0] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(p.tensors[1].values[0] == doctest::Approx(-0.2).epsilon(1e-7));
  CHECK(s.epoch_losses == std::vector<double>{1.0});
  CHECK(s.examples_seen == 1);
}

TEST_CASE("restore / parameters round-trip and restore overwrites training") {
  std::mt19937_64 rng(4);
  const Architecture arch = testutil::small_mlp(3, 5, 2);
  MlpModel m(arch, LossKind::kMse);
  const ParameterSet p = testutil::random_params(schema_for_architecture(arch), rng);
  m.restore(p);
  CHECK(bit_equal(m.parameters(), p));
  m.train(random_dataset(rng, 20, 3, 2, LossKind::kMse), {2, 4, 0.1, 9});
  CHECK_FALSE(bit_equal(m.parameters(), p));
  m.restore(p);
  CHECK(bit_equal(m.parameters(), p));
  const ParameterSet other = testutil::random_params(schema_for_architecture(testutil::small_mlp(3, 6, 2)), rng);
  CHECK(error_code_of([&] { m.restore(other); }) == Errc::kSchemaMismatch);
}

TEST_CASE("lr = 0 leaves parameters unchanged and epoch losses equal") {
  std::mt19937_64 rng(8);
  const Architecture arch = testutil::small_mlp(4, 6, 3, Activation::kSoftmax);
  MlpModel m(arch, LossKind::kCrossEntropy);
  const ParameterSet p = testutil::random_params(schema_for_architecture(arch), rng);
  m.restore(p);
  const TrainStats s = m.train(random_dataset(rng, 37, 4, 3, LossKind::kCrossEntropy), {4, 5, 0.0, 1});
  CHECK(bit_equal(m.parameters(), p));
  REQUIRE(s.epoch_losses.size() == 4);
  for (double l : s.epoch_losses) CHECK(testutil::double_bits(l) == testutil::double_bits(s.epoch_losses[0]));
}

TEST_CASE("training is deterministic given the seed") {
  std::mt19937_64 rng(12);
  const Architecture arch = testutil::small_mlp(3, 7, 1);
  const ParameterSet p = testutil::random_params(schema_for_architecture(arch), rng, 0.5f);
  const Dataset d = random_dataset(rng, 50, 3, 1, LossKind::kMse);
  auto run = [&](std::uint64_t seed) {
    MlpModel m(arch, LossKind::kMse);
    m.restore(p);
    const TrainStats s = m.train(d, {2, 8, 0.05, seed});
    return std::make_pair(s.epoch_losses, m.parameters());
  };
  const auto a = run(77), b = run(77), c = run(78);
  CHECK(a.first == b.first);
  CHECK(bit_equal(a.second, b.second));
  CHECK_FALSE(bit_equal(a.second, c.second));
}

TEST_CASE("train validates its inputs") {
  MlpModel m(testutil::small_mlp(3, 4, 1), LossKind::kMse);
  std::mt19937_64 rng(1);
  const Dataset d = random_dataset(rng, 10, 3, 1, LossKind::kMse);
  CHECK(error_code_of([&] { m.train(Dataset{Matrix(0, 3), Matrix(0, 1)}, {1, 1, 0.1, 0}); }) ==
        Errc::kEmptyDataset);
  CHECK(error_code_of([&] { m.train(random_dataset(rng, 10, 2, 1, LossKind::kMse), {1, 1, 0.1, 0}); }) ==
        Errc::kDimensionMismatch);
  CHECK(error_code_of([&] { m.train(random_dataset(rng, 10, 3, 2, LossKind::kMse), {1, 1, 0.1, 0}); }) ==
        Errc::kDimensionMismatch);
  CHECK(error_code_of([&] { m.train(d, {1, 11, 0.1, 0}); }) == Errc::kInvalidArgument);
  CHECK(error_code_of([&] { m.train(d, {1, 2, 10.0, 0}); }) == Errc::kInvalidArgument);
  CHECK(error_code_of([&] { m.train(d, {0, 2, 0.1, 0}); }) == Errc::kInvalidArgument);

  MlpModel c(testutil::small_mlp(3, 4, 2, Activation::kSoftmax), LossKind::kCrossEntropy);
  Dataset bad = random_dataset(rng, 10, 3, 2, LossKind::kCrossEntropy);
  bad.y.row(3)[0] = 2.0;  // class out of range
  CHECK(error_code_of([&] { c.train(bad, {1, 2, 0.1, 0}); }) == Errc::kDimensionMismatch);
}

TEST_CASE("infer: identity network, softmax normalization, row order") {
  MlpModel id({{3, 3, Activation::kIdentity}}, LossKind::kMse);
  id.restore(ParameterSet{{Tensor{{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}}, Tensor{{3}, {0, 0, 0}}}});
  std::mt19937_64 rng(2);
  Matrix x(5, 3);
  for (double& v : x.data) v = static_cast<double>(static_cast<float>(rng() % 1000) / 7.0f);
  CHECK(id.infer(x).data == x.data);

  const Architecture arch = testutil::small_mlp(3, 6, 4, Activation::kSoftmax);
  MlpModel sm(arch, LossKind::kCrossEntropy);
  sm.restore(testutil::random_params(schema_for_architecture(arch), rng, 3.0f));
  const Matrix y = sm.infer(x);
  REQUIRE(y.rows == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) sum += y.row(i)[j];
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
  // Row i of a batch equals inferring row i alone.
  Matrix one(1, 3);
  std::copy_n(x.row(2), 3, one.row(0));
  CHECK(sm.infer(one).data == std::vector<double>(y.row(2), y.row(2) + 4));
  CHECK(error_code_of([&] { sm.infer(Matrix(2, 4)); }) == Errc::kDimensionMismatch);
}

TEST_CASE("infer matches an independent forward pass") {
  std::mt19937_64 rng(21);
  const Architecture arch = testutil::small_mlp(4, 5, 2);
  const ParameterSet p = testutil::random_params(schema_for_architecture(arch), rng);
  MlpModel m(arch, LossKind::kMse);
  m.restore(p);
  Matrix x(3, 4);
  for (double& v : x.data) v = static_cast<double>(rng() % 100) / 10.0 - 5.0;
  const Matrix y = m.infer(x);
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double s = p.tensors[1].values[j];
      for (std::size_t i = 0; i < 4; ++i) s += x.row(r)[i] * p.tensors[0].values[i * 5 + j];
      h[j] = std::max(0.0, s);
    }
    for (std::size_t j = 0; j < 2; ++j) {
      double s = p.tensors[3].values[j];
      for (std::size_t i = 0; i < 5; ++i) s += h[i] * p.tensors[2].values[i * 2 + j];
      CHECK(y.row(r)[j] == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate: perfect predictor, uniform classifier, purity") {
  MlpModel id({{2, 2, Activation::kIdentity}}, LossKind::kMse);
  id.restore(ParameterSet{{Tensor{{2, 2}, {1, 0, 0, 1}}, Tensor{{2}, {0, 0}}}});
  Dataset d;
  d.x = Matrix(3, 2);
  d.x.data = {1, 2, 3, 4, 5, 6};
  d.y = d.x;
  const EvalResult perfect = id.evaluate(d);
  CHECK(perfect.loss == 0.0);
  CHECK(perfect.metric == 0.0);

  // All-zero weights give a uniform softmax: loss ln 2 on any labels.
  MlpModel u(testutil::small_mlp(3, 4, 2, Activation::kSoftmax), LossKind::kCrossEntropy);
  std::mt19937_64 rng(5);
  Dataset balanced = random_dataset(rng, 40, 3, 2, LossKind::kCrossEntropy);
  for (std::size_t i = 0; i < 40; ++i) balanced.y.row(i)[0] = static_cast<double>(i % 2);
  const EvalResult r1 = u.evaluate(balanced);
  CHECK(std::fabs(r1.loss - std::log(2.0)) <= 1e-6);
  const EvalResult r2 = u.evaluate(balanced);
  CHECK(r1.loss == r2.loss);
  CHECK(r1.metric == r2.metric);
  CHECK(error_code_of([&] { u.evaluate(Dataset{Matrix(0, 3), Matrix(0, 1)}); }) == Errc::kEmptyDataset);
}

TEST_CASE("property: analytic gradients match central finite differences") {
  const oracles::GradientCheck g = oracles::check_gradients(31337, 50, 1e-5);
  for (const std::string& f : g.failures) FAIL_CHECK(f);
  CHECK(g.coordinates > 1000);
  MESSAGE("worst gradient relative error: ", g.worst_rel_err);
}

TEST_CASE("50 epochs on an exactly linear task cut the training loss by 90%") {
  std::mt19937_64 rng(77);
  const Architecture arch{{3, 1, Activation::kIdentity}};
  Dataset d;
  d.x = Matrix(64, 3);
  d.y = Matrix(64, 1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < 64; ++i) {
    for (int j = 0; j < 3; ++j) d.x.row(i)[j] = g(rng);
    d.y.row(i)[0] = 1.5 * d.x.row(i)[0] - 2.0 * d.x.row(i)[1] + 0.5 * d.x.row(i)[2] + 0.3;
  }
  MlpModel m(arch, LossKind::kMse);
  m.restore(zeros_like(m.schema()));
  const double before = m.evaluate(d).loss;
  const TrainStats s = m.train(d, {50, 8, 0.05, 3});
  CHECK(s.epoch_losses.size() == 50);
  CHECK(m.evaluate(d).loss <= 0.1 * before);

  // Separable classification.
  const Architecture carch = testutil::small_mlp(2, 6, 2, Activation::kSoftmax);
  Dataset c;
  c.x = Matrix(80, 2);
  c.y = Matrix(80, 1);
  for (std::size_t i = 0; i < 80; ++i) {
    const double label = static_cast<double>(i % 2);
    c.x.row(i)[0] = (label == 0 ? -2.0 : 2.0) + 0.5 * g(rng);
    c.x.row(i)[1] = 0.5 * g(rng);
    c.y.row(i)[0] = label;
  }
  MlpModel cm(carch, LossKind::kCrossEntropy);
  cm.restore(testutil::random_params(schema_for_architecture(carch), rng, 0.5f));
  const double cbefore = cm.evaluate(c).loss;
  cm.train(c, {50, 8, 0.05, 4});
  CHECK(cm.evaluate(c).loss <= 0.1 * cbefore);
  CHECK(cm.evaluate(c).metric == 1.0);
}

TEST_CASE("step hook sees every step and compute time adds up") {
  std::mt19937_64 rng(6);
  MlpModel m(testutil::small_mlp(3, 4, 1), LossKind::kMse);
  const Dataset d = random_dataset(rng, 30, 3, 1, LossKind::kMse);
  int steps = 0;
  double total = 0.0;
  const TrainStats s = m.train(d, {2, 7, 0.01, 0}, [&](double c) {
    ++steps;
    total += c;
  });
  CHECK(steps == 2 * 5);  // ceil(30 / 7) per epoch
  CHECK(total == doctest::Approx(s.compute_time_s));
  CHECK(s.wall_time_s >= 0.0);
}
