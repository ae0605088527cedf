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

#include "crossfl/trainer.hpp"

#include <time.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "crossfl/kernels/kernels.hpp"
#include "crossfl/rng.hpp"

namespace crossfl {
namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

void apply_activation(Activation act, const std::vector<double>& z, std::vector<double>& a) {
  a.resize(z.size());
  switch (act) {
    case Activation::kIdentity:
      a = z;
      break;
    case Activation::kRelu:
      for (std::size_t j = 0; j < z.size(); ++j) a[j] = z[j] > 0.0 ? z[j] : 0.0;
      break;
    case Activation::kSoftmax: {
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        a[j] = std::exp(z[j] - m);
        sum += a[j];
      }
      for (double& v : a) v /= sum;
      break;
    }
  }
}

// log(sum(exp(z))) with the max subtracted first.
double log_sum_exp(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return m + std::log(sum);
}

std::size_t label_of(const double* target) { return static_cast<std::size_t>(target[0]); }

}  // namespace

double Pcg32::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

MlpModel::MlpModel(Architecture arch, LossKind loss) : arch_(std::move(arch)), loss_(loss) {
  validate_architecture(arch_, loss_);
  schema_ = schema_for_architecture(arch_);
  for (const TensorSpec& spec : schema_.tensors) params_.emplace_back(spec.element_count(), 0.0);
}

MlpModel MlpModel::from_manifest(const ModelManifest& manifest, const ParameterSet& params) {
  MlpModel model(manifest.architecture, manifest.loss);
  model.restore(params);
  return model;
}

ParameterSet MlpModel::parameters() const {
  ParameterSet p;
  p.tensors.reserve(params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t{schema_.tensors[k].shape, std::vector<float>(params_[k].size())};
    std::transform(params_[k].begin(), params_[k].end(), t.values.begin(),
                   [](double v) { return static_cast<float>(v); });
    p.tensors.push_back(std::move(t));
  }
  return p;
}

void MlpModel::restore(const ParameterSet& params) {
  check_conforms(params, schema_, Errc::kSchemaMismatch);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::transform(params.tensors[k].values.begin(), params.tensors[k].values.end(),
                   params_[k].begin(), [](float v) { return static_cast<double>(v); });
  }
}

void MlpModel::check_dataset(const Dataset& data) const {
  if (data.size() == 0) throw Error(Errc::kEmptyDataset, "dataset has no rows");
  if (data.x.cols != arch_.front().input_dim) {
    throw Error(Errc::kDimensionMismatch, "feature dim " + std::to_string(data.x.cols) +
                                              " != input_dim " +
                                              std::to_string(arch_.front().input_dim));
  }
  if (data.y.rows != data.x.rows) {
    throw Error(Errc::kDimensionMismatch, "targets and features differ in row count");
  }
  const std::size_t out_dim = arch_.back().output_dim;
  if (loss_ == LossKind::kMse) {
    if (data.y.cols != out_dim) {
      throw Error(Errc::kDimensionMismatch, "target dim " + std::to_string(data.y.cols) +
                                                " != output_dim " + std::to_string(out_dim));
    }
    return;
  }
  if (data.y.cols != 1) throw Error(Errc::kDimensionMismatch, "class targets must be one column");
  for (double label : data.y.data) {
    if (!(label >= 0.0) || label >= static_cast<double>(out_dim) || label != std::floor(label)) {
      throw Error(Errc::kDimensionMismatch, "class label out of range");
    }
  }
}

void MlpModel::forward(const double* x, std::vector<std::vector<double>>& pre,
                       std::vector<std::vector<double>>& acts) const {
  const auto& kern = kernels::active();
  pre.resize(arch_.size());
  acts.resize(arch_.size() + 1);
  acts[0].assign(x, x + arch_.front().input_dim);
  for (std::size_t k = 0; k < arch_.size(); ++k) {
    const LayerDesc& layer = arch_[k];
    const std::vector<double>& w = params_[2 * k];
    std::vector<double>& z = pre[k];
    z = params_[2 * k + 1];
    for (std::size_t i = 0; i < layer.input_dim; ++i) {
      kern.axpy(z.data(), acts[k][i], w.data() + i * layer.output_dim, layer.output_dim);
    }
    apply_activation(layer.activation, z, acts[k + 1]);
  }
}

double MlpModel::example_loss(const std::vector<double>& out_pre, const std::vector<double>& out,
                              const double* target) const {
  if (loss_ == LossKind::kCrossEntropy) {
    return log_sum_exp(out_pre) - out_pre[label_of(target)];
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double d = out[j] - target[j];
    sum += d * d;
  }
  return sum;
}

double MlpModel::loss_and_gradient(const Dataset& data, std::span<const std::size_t> rows,
                                   std::vector<std::vector<double>>* grad) const {
  check_dataset(data);
  return batch_loss(data, rows, grad);
}

double MlpModel::batch_loss(const Dataset& data, std::span<const std::size_t> rows,
                            std::vector<std::vector<double>>* grad) const {
  if (rows.empty()) throw Error(Errc::kEmptyDataset, "empty batch");
  const auto& kern = kernels::active();
  if (grad != nullptr) {
    grad->resize(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) (*grad)[k].assign(params_[k].size(), 0.0);
  }

  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
  std::vector<double> delta;
  std::vector<double> upstream;
  double loss_sum = 0.0;
  for (std::size_t r : rows) {
    if (r >= data.size()) throw Error(Errc::kDimensionMismatch, "row index out of range");
    forward(data.x.row(r), pre, acts);
    const double* target = data.y.row(r);
    loss_sum += example_loss(pre.back(), acts.back(), target);
    if (grad == nullptr) continue;

    // dL/dz for the output layer.
    const std::vector<double>& out = acts.back();
    delta.resize(out.size());
    if (loss_ == LossKind::kCrossEntropy) {
      delta = out;
      delta[label_of(target)] -= 1.0;
    } else {
      for (std::size_t j = 0; j < out.size(); ++j) delta[j] = 2.0 * (out[j] - target[j]);
      if (arch_.back().activation == Activation::kRelu) {
        for (std::size_t j = 0; j < delta.size(); ++j) {
          if (!(pre.back()[j] > 0.0)) delta[j] = 0.0;
        }
      }
    }

    for (std::size_t k = arch_.size(); k-- > 0;) {
      const LayerDesc& layer = arch_[k];
      std::vector<double>& gw = (*grad)[2 * k];
      std::vector<double>& gb = (*grad)[2 * k + 1];
      for (std::size_t i = 0; i < layer.input_dim; ++i) {
        kern.axpy(gw.data() + i * layer.output_dim, acts[k][i], delta.data(), layer.output_dim);
      }
      kern.axpy(gb.data(), 1.0, delta.data(), layer.output_dim);
      if (k == 0) break;

      const std::vector<double>& w = params_[2 * k];
      upstream.resize(layer.input_dim);
      for (std::size_t i = 0; i < layer.input_dim; ++i) {
        upstream[i] = kern.dot(w.data() + i * layer.output_dim, delta.data(), layer.output_dim);
      }
      if (arch_[k - 1].activation == Activation::kRelu) {
        for (std::size_t i = 0; i < upstream.size(); ++i) {
          if (!(pre[k - 1][i] > 0.0)) upstream[i] = 0.0;
        }
      }
      delta.swap(upstream);
    }
  }

  const double batch = static_cast<double>(rows.size());
  if (grad != nullptr) {
    for (auto& g : *grad) {
      for (double& v : g) v /= batch;
    }
  }
  return loss_sum / batch;
}

TrainStats MlpModel::train(const Dataset& data, const TrainConfig& config, const StepHook& hook) {
  check_dataset(data);
  const std::size_t n = data.size();
  if (config.epochs == 0) throw Error(Errc::kInvalidArgument, "epochs must be positive");
  if (config.batch_size == 0 || config.batch_size > n) {
    throw Error(Errc::kInvalidArgument, "batch_size must be in [1, dataset size]");
  }
  if (!(config.learning_rate >= 0.0) || !(config.learning_rate < 10.0)) {
    throw Error(Errc::kInvalidArgument, "learning_rate must be in [0, 10)");
  }

  const auto& kern = kernels::active();
  TrainStats stats;
  std::vector<std::size_t> order(n);
  std::vector<double> example_losses(n, 0.0);
  std::vector<std::vector<double>> grad;
  std::vector<double> single_loss;
  const auto wall_start = std::chrono::steady_clock::now();

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Pcg32 rng(config.seed ^ static_cast<std::uint64_t>(epoch));
    shuffle(std::span<std::size_t>(order), rng);

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);

      const double t0 = thread_cpu_seconds();
      // Per-example losses at the pre-step parameters, recorded by row index
      // so the epoch mean is summed in a fixed order.
      for (std::size_t r : rows) {
        example_losses[r] = batch_loss(data, std::span<const std::size_t>(&r, 1), nullptr);
      }
      batch_loss(data, rows, &grad);
      for (std::size_t k = 0; k < params_.size(); ++k) {
        kern.axpy(params_[k].data(), -config.learning_rate, grad[k].data(), params_[k].size());
      }
      const double step = thread_cpu_seconds() - t0;
      stats.compute_time_s += step;
      if (hook) hook(step);
    }

    double sum = 0.0;
    for (double l : example_losses) sum += l;
    stats.epoch_losses.push_back(sum / static_cast<double>(n));
    stats.examples_seen += n;
  }
  stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return stats;
}

Matrix MlpModel::infer(const Matrix& inputs) const {
  if (inputs.cols != arch_.front().input_dim) {
    throw Error(Errc::kDimensionMismatch, "input dim " + std::to_string(inputs.cols) +
                                              " != input_dim " +
                                              std::to_string(arch_.front().input_dim));
  }
  Matrix out(inputs.rows, arch_.back().output_dim);
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
  for (std::size_t r = 0; r < inputs.rows; ++r) {
    forward(inputs.row(r), pre, acts);
    std::copy(acts.back().begin(), acts.back().end(), out.row(r));
  }
  return out;
}

EvalResult MlpModel::evaluate(const Dataset& data) const {
  check_dataset(data);
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
  double loss_sum = 0.0;
  double metric_sum = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    forward(data.x.row(r), pre, acts);
    const double* target = data.y.row(r);
    loss_sum += example_loss(pre.back(), acts.back(), target);
    const std::vector<double>& out = acts.back();
    if (loss_ == LossKind::kCrossEntropy) {
      const auto best = static_cast<std::size_t>(
          std::max_element(out.begin(), out.end()) - out.begin());
      metric_sum += best == label_of(target) ? 1.0 : 0.0;
    } else {
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double d = out[j] - target[j];
        metric_sum += d * d;
      }
    }
  }
  const double n = static_cast<double>(data.size());
  EvalResult result;
  result.loss = loss_sum / n;
  result.metric = loss_ == LossKind::kCrossEntropy
                      ? metric_sum / n
                      : std::sqrt(metric_sum / (n * static_cast<double>(arch_.back().output_dim)));
  return result;
}

}  // namespace crossfl
