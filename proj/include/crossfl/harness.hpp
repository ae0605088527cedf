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
#include <filesystem>
#include <string>
#include <vector>

#include "crossfl/client_runtime.hpp"
#include "crossfl/fl_server.hpp"
#include "crossfl/model_package.hpp"
#include "crossfl/trainer.hpp"

namespace crossfl::harness {

enum class TaskKind { kBlobsClassification, kSleepRegression };
std::string_view to_string(TaskKind k);
TaskKind parse_task(std::string_view s);
// "digits" for blobs, "sleep" for the sleep regression.
std::string data_type_for(TaskKind k);
TaskKind task_for_data_type(std::string_view data_type);

struct SyntheticTask {
  TaskKind kind = TaskKind::kBlobsClassification;
  std::size_t n_examples = 400;
  std::uint64_t seed = 0;
  std::uint32_t features = 4;  // blobs only, 2..8
};

// Pure function of the task. Blobs: two Gaussian classes, labels alternate
// 0,1,0,1... Sleep: standardized (prior-day steps, active minutes,
// screen-off hour) -> hours of sleep, a linear combination plus noise.
Dataset generate(const SyntheticTask& task);

enum class Partition { kIid, kLabelSkew };
Partition parse_partition(std::string_view s);

// Disjoint index sets covering [0, n). iid splits a seeded permutation into
// near-equal parts. label_skew gives client i majority class i mod C: 90% of
// each class goes to its own clients, the rest is spread over the others.
// Regression targets are bucketed by the median for label_skew.
std::vector<std::vector<std::size_t>> partition(const Dataset& data, std::uint32_t k, Partition p,
                                                std::uint64_t seed);
Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows);
std::vector<Dataset> generate_shards(const SyntheticTask& task, std::uint32_t k, Partition p);

// Header row of feature names then the label column last.
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, const std::filesystem::path& path);

// Default demo architectures; v2 widens the hidden layer.
Architecture default_architecture(TaskKind k, std::uint32_t hidden, std::uint32_t features = 4);
LossKind default_loss(TaskKind k);

// Xavier-uniform weights from a seeded generator, zero biases.
ParameterSet xavier_parameters(const Architecture& arch, std::uint64_t seed);
ModelPackage build_package(const std::string& name, std::uint32_t version, TaskKind kind,
                           std::uint32_t hidden, std::uint64_t seed);

struct DemoConfig {
  std::uint64_t seed = 7;
  std::uint32_t rounds = 10;
  std::uint32_t clients = 2;
  std::uint32_t epochs = 2;
  std::uint32_t batch_size = 16;
  double learning_rate = 0.05;
  std::size_t examples_per_client = 200;
  Partition partition = Partition::kIid;
  std::vector<TaskKind> tasks{TaskKind::kBlobsClassification, TaskKind::kSleepRegression};
  std::uint32_t hidden_v1 = 8;
  std::uint32_t hidden_v2 = 16;
  bool redeploy = true;
  // Skip the platform layouts on every client.
  bool canonical = false;
  // Speed factor of client i is speed_factors[i % size].
  std::vector<double> speed_factors{5.46, 1.0};
  std::filesystem::path out_dir = "demo-out";
  std::uint16_t port_range_begin = 9100;
  std::uint16_t port_range_end = 9199;
};

struct PhaseResult {
  TaskKind task = TaskKind::kBlobsClassification;
  std::string model_name;
  std::uint32_t version = 0;
  std::string session_id;
  std::vector<RoundRecord> rounds;
  std::vector<ClientReport> clients;
  std::string final_params_digest;
};

struct DemoResult {
  std::vector<PhaseResult> phases;
  std::vector<TelemetryRecord> telemetry;
  // Named assertion failures; empty on success.
  std::vector<std::string> failures;
  double elapsed_s = 0.0;

  bool ok() const { return failures.empty(); }
};

// Backend + heterogeneous clients in one process: deploy v1, train, check
// the loss-halving criterion, deploy v2, retrain with the same clients.
// Writes losses.csv and telemetry.csv into out_dir; the backend's data
// directory is out_dir/backend and is recreated on every run.
DemoResult demo_run(const DemoConfig& config);

std::string losses_csv(const std::vector<PhaseResult>& phases);
std::string telemetry_csv(const std::vector<TelemetryRecord>& records);

}  // namespace crossfl::harness
