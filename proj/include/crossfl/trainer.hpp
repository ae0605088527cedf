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
#include <functional>
#include <span>
#include <vector>

#include "crossfl/model_package.hpp"
#include "crossfl/parameters.hpp"
#include "crossfl/schema.hpp"

namespace crossfl {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  bool operator==(const Matrix&) const = default;
};

// Features x (n x input_dim) and targets y. For mse, y is n x output_dim; for
// cross_entropy, y is n x 1 holding the class index.
struct Dataset {
  Matrix x;
  Matrix y;

  std::size_t size() const { return x.rows; }
  bool operator==(const Dataset&) const = default;
};

struct TrainConfig {
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 1;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

struct TrainStats {
  std::vector<double> epoch_losses;  // mean per-example loss, one per epoch
  double wall_time_s = 0.0;          // steady clock around the training loop
  double compute_time_s = 0.0;       // thread CPU time spent inside steps
  std::uint64_t examples_seen = 0;
};

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;  // accuracy (cross_entropy) or RMSE (mse)
};

// Called after every SGD step with that step's thread CPU time.
using StepHook = std::function<void(double step_cpu_seconds)>;

// Dense MLP trained by mini-batch SGD. Parameters live in double precision;
// parameters()/restore() cross the single-precision boundary.
//
// Losses per example: mse = sum_j (yhat_j - y_j)^2, cross_entropy =
// -log softmax(z)_label. Batch loss and gradient are means over the batch.
class MlpModel {
 public:
  // Throws kSchemaMismatch for an invalid architecture. Weights start at 0;
  // real initial weights come from a package via restore().
  MlpModel(Architecture arch, LossKind loss);

  static MlpModel from_manifest(const ModelManifest& manifest, const ParameterSet& params);

  const Architecture& architecture() const { return arch_; }
  LossKind loss() const { return loss_; }
  const ParameterSchema& schema() const { return schema_; }

  ParameterSet parameters() const;
  // Throws kSchemaMismatch if `params` does not fit this architecture.
  void restore(const ParameterSet& params);

  // Throws kEmptyDataset, kDimensionMismatch, kInvalidArgument (config).
  TrainStats train(const Dataset& data, const TrainConfig& config, const StepHook& hook = {});

  // Forward pass, one output row per input row. Throws kDimensionMismatch.
  Matrix infer(const Matrix& inputs) const;

  EvalResult evaluate(const Dataset& data) const;

  // Mean loss over `rows` of `data`; fills `grad` (same layout as
  // raw_parameters()) with the mean gradient when non-null.
  double loss_and_gradient(const Dataset& data, std::span<const std::size_t> rows,
                           std::vector<std::vector<double>>* grad) const;

  // Double-precision tensors in canonical order (weight_k, bias_k, ...).
  std::vector<std::vector<double>>& raw_parameters() { return params_; }
  const std::vector<std::vector<double>>& raw_parameters() const { return params_; }

 private:
  void check_dataset(const Dataset& data) const;
  double batch_loss(const Dataset& data, std::span<const std::size_t> rows,
                    std::vector<std::vector<double>>* grad) const;
  // Forward through all layers; `acts` receives the input plus every layer's
  // activation, `pre` every layer's pre-activation.
  void forward(const double* x, std::vector<std::vector<double>>& pre,
               std::vector<std::vector<double>>& acts) const;
  double example_loss(const std::vector<double>& out_pre, const std::vector<double>& out,
                      const double* target) const;

  Architecture arch_;
  LossKind loss_;
  ParameterSchema schema_;
  std::vector<std::vector<double>> params_;
};

}  // namespace crossfl
