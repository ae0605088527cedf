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

#include "crossfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "crossfl/backend.hpp"
#include "crossfl/backend_client.hpp"
#include "crossfl/rng.hpp"

namespace crossfl::harness {
namespace {

namespace fs = std::filesystem;

constexpr double kBlobSeparation = 2.5;  // distance of each class mean from 0
constexpr double kSkewShare = 0.9;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::uint32_t> class_labels(const Dataset& data) {
  std::vector<std::uint32_t> labels(data.size());
  const bool integral = std::all_of(data.y.data.begin(), data.y.data.end(), [](double v) {
    return v >= 0.0 && v == std::floor(v) && v < 1024.0;
  });
  if (integral && data.y.cols == 1) {
    for (std::size_t i = 0; i < data.size(); ++i) labels[i] = static_cast<std::uint32_t>(data.y.data[i]);
    return labels;
  }
  // Regression: above or below the median target.
  std::vector<double> t(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) t[i] = data.y.data[i * data.y.cols];
  std::vector<double> sorted = t;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                   sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (std::size_t i = 0; i < data.size(); ++i) labels[i] = t[i] >= median ? 1u : 0u;
  return labels;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string_view to_string(TaskKind k) {
  return k == TaskKind::kBlobsClassification ? "blobs_classification" : "sleep_regression";
}

TaskKind parse_task(std::string_view s) {
  if (s == "blobs_classification" || s == "blobs" || s == "digits") return TaskKind::kBlobsClassification;
  if (s == "sleep_regression" || s == "sleep") return TaskKind::kSleepRegression;
  throw Error(Errc::kInvalidArgument, "unknown task '" + std::string(s) + "'");
}

std::string data_type_for(TaskKind k) {
  return k == TaskKind::kBlobsClassification ? "digits" : "sleep";
}

TaskKind task_for_data_type(std::string_view data_type) {
  if (data_type == "digits") return TaskKind::kBlobsClassification;
  if (data_type == "sleep") return TaskKind::kSleepRegression;
  throw Error(Errc::kInvalidArgument, "no synthetic task for data type '" + std::string(data_type) + "'");
}

Partition parse_partition(std::string_view s) {
  if (s == "iid") return Partition::kIid;
  if (s == "label_skew") return Partition::kLabelSkew;
  throw Error(Errc::kInvalidArgument, "unknown partition '" + std::string(s) + "'");
}

Dataset generate(const SyntheticTask& task) {
  Pcg32 rng(task.seed);
  Dataset d;
  const std::size_t n = task.n_examples;
  if (task.kind == TaskKind::kBlobsClassification) {
    if (task.features < 2 || task.features > 8) {
      throw Error(Errc::kInvalidArgument, "blobs need 2..8 features");
    }
    const std::size_t f = task.features;
    std::vector<double> mean(f);
    for (std::size_t j = 0; j < f; ++j) {
      mean[j] = (j % 2 == 0 ? 1.0 : -1.0) * kBlobSeparation / std::sqrt(static_cast<double>(f));
    }
    d.x = Matrix(n, f);
    d.y = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double label = static_cast<double>(i % 2);
      const double sign = label == 0.0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < f; ++j) d.x.row(i)[j] = sign * mean[j] + rng.normal();
      d.y.row(i)[0] = label;
    }
    return d;
  }
  // Standardized features: prior-day steps, active minutes, screen-off hour.
  d.x = Matrix(n, 3);
  d.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double steps = rng.normal();
    const double active = rng.normal();
    const double screen_off = rng.normal();
    const double noise = rng.normal();
    d.x.row(i)[0] = steps;
    d.x.row(i)[1] = active;
    d.x.row(i)[2] = screen_off;
    d.y.row(i)[0] = 7.2 + 0.5 * steps + 0.35 * active - 0.6 * screen_off + 0.25 * noise;
  }
  return d;
}

std::vector<std::vector<std::size_t>> partition(const Dataset& data, std::uint32_t k, Partition p,
                                                std::uint64_t seed) {
  if (k < 1) throw Error(Errc::kInvalidArgument, "k must be >= 1");
  const std::size_t n = data.size();
  if (k > n) throw Error(Errc::kInvalidArgument, "more shards than examples");
  std::vector<std::vector<std::size_t>> out(k);
  Pcg32 rng(seed);

  if (p == Partition::kIid) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(std::span<std::size_t>(idx), rng);
    for (std::uint32_t c = 0; c < k; ++c) {
      const std::size_t lo = n * c / k;
      const std::size_t hi = n * (c + 1) / k;
      out[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  } else {
    const std::vector<std::uint32_t> labels = class_labels(data);
    const std::uint32_t classes =
        labels.empty() ? 1u : *std::max_element(labels.begin(), labels.end()) + 1u;
    for (std::uint32_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == c) pool.push_back(i);
      }
      shuffle(std::span<std::size_t>(pool), rng);
      std::vector<std::uint32_t> own, others;
      for (std::uint32_t i = 0; i < k; ++i) (i % classes == c ? own : others).push_back(i);
      if (own.empty()) {
        for (std::size_t j = 0; j < pool.size(); ++j) out[others[j % others.size()]].push_back(pool[j]);
        continue;
      }
      const std::size_t kept = others.empty()
                                   ? pool.size()
                                   : static_cast<std::size_t>(std::ceil(kSkewShare * static_cast<double>(pool.size())));
      for (std::size_t o = 0; o < own.size(); ++o) {
        const std::size_t lo = kept * o / own.size();
        const std::size_t hi = kept * (o + 1) / own.size();
        for (std::size_t j = lo; j < hi; ++j) out[own[o]].push_back(pool[j]);
      }
      for (std::size_t j = kept; j < pool.size(); ++j) {
        out[others[(j - kept) % others.size()]].push_back(pool[j]);
      }
    }
  }
  for (auto& s : out) std::sort(s.begin(), s.end());
  return out;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows) {
  Dataset s;
  s.x = Matrix(rows.size(), data.x.cols);
  s.y = Matrix(rows.size(), data.y.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(data.x.row(rows[i]), data.x.cols, s.x.row(i));
    std::copy_n(data.y.row(rows[i]), data.y.cols, s.y.row(i));
  }
  return s;
}

std::vector<Dataset> generate_shards(const SyntheticTask& task, std::uint32_t k, Partition p) {
  const Dataset data = generate(task);
  std::vector<Dataset> shards;
  for (const auto& rows : partition(data, k, p, task.seed ^ 0x5eedull)) shards.push_back(subset(data, rows));
  return shards;
}

Dataset load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kEmptyDataset, path.string() + " is empty");
  const std::size_t cols = split_csv(line).size();
  if (cols < 2) throw Error(Errc::kDimensionMismatch, "need at least one feature and a label");
  std::vector<double> xs, ys;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != cols) {
      throw Error(Errc::kDimensionMismatch,
                  path.string() + " row " + std::to_string(rows + 2) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        throw Error(Errc::kInvalidArgument, path.string() + " row " + std::to_string(rows + 2) +
                                                ": '" + cells[c] + "' is not a number");
      }
      (c + 1 == cols ? ys : xs).push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw Error(Errc::kEmptyDataset, path.string() + " has no rows");
  Dataset d;
  d.x = Matrix(rows, cols - 1);
  d.x.data = std::move(xs);
  d.y = Matrix(rows, 1);
  d.y.data = std::move(ys);
  return d;
}

void write_csv(const Dataset& data, const fs::path& path) {
  if (data.y.cols != 1) throw Error(Errc::kDimensionMismatch, "csv export needs one label column");
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  for (std::size_t j = 0; j < data.x.cols; ++j) out << 'x' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.x.cols; ++j) out << fmt(data.x.row(i)[j]) << ',';
    out << fmt(data.y.row(i)[0]) << '\n';
  }
}

Architecture default_architecture(TaskKind k, std::uint32_t hidden, std::uint32_t features) {
  if (k == TaskKind::kBlobsClassification) {
    return {{features, hidden, Activation::kRelu}, {hidden, 2, Activation::kSoftmax}};
  }
  return {{3, hidden, Activation::kRelu}, {hidden, 1, Activation::kIdentity}};
}

LossKind default_loss(TaskKind k) {
  return k == TaskKind::kBlobsClassification ? LossKind::kCrossEntropy : LossKind::kMse;
}

ParameterSet xavier_parameters(const Architecture& arch, std::uint64_t seed) {
  Pcg32 rng(seed);
  ParameterSet p;
  for (const LayerDesc& l : arch) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.input_dim + l.output_dim));
    Tensor w{{l.input_dim, l.output_dim}, std::vector<float>(std::size_t{l.input_dim} * l.output_dim)};
    for (float& v : w.values) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(Tensor{{l.output_dim}, std::vector<float>(l.output_dim, 0.0f)});
  }
  return p;
}

ModelPackage build_package(const std::string& name, std::uint32_t version, TaskKind kind,
                           std::uint32_t hidden, std::uint64_t seed) {
  const Architecture arch = default_architecture(kind, hidden);
  return make_package(name, version, data_type_for(kind), arch, default_loss(kind),
                      xavier_parameters(arch, seed), "xavier_uniform");
}

std::string losses_csv(const std::vector<PhaseResult>& phases) {
  std::string out = "task,model,version,round,eval_loss,eval_metric,train_loss,params_digest\n";
  for (const PhaseResult& p : phases) {
    for (const RoundRecord& r : p.rounds) {
      out += std::string(to_string(p.task)) + "," + p.model_name + "," + std::to_string(p.version) +
             "," + std::to_string(r.round) + "," + fmt(r.eval_loss) + "," + fmt(r.eval_metric) + "," +
             fmt(r.aggregated_loss) + "," + r.params_digest + "\n";
    }
  }
  return out;
}

std::string telemetry_csv(const std::vector<TelemetryRecord>& records) {
  std::string out = "client_id,platform,device,ram,session_id,round,wall_time_s\n";
  for (const TelemetryRecord& t : records) {
    out += t.client_id + "," + t.platform + ",\"" + t.device + "\",\"" + t.ram + "\"," + t.session_id +
           "," + std::to_string(t.round) + "," + fmt(t.wall_time_s) + "\n";
  }
  return out;
}

DemoResult demo_run(const DemoConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  DemoResult result;
  if (config.clients < 1) throw Error(Errc::kInvalidArgument, "clients must be >= 1");
  if (config.speed_factors.empty()) throw Error(Errc::kInvalidArgument, "no speed factors");

  fs::create_directories(config.out_dir);
  const fs::path data_dir = config.out_dir / "backend";
  fs::remove_all(data_dir);

  BackendConfig bc;
  bc.http_port = 0;
  bc.data_dir = data_dir;
  bc.port_range_begin = config.port_range_begin;
  bc.port_range_end = config.port_range_end;
  bc.defaults.rounds = config.rounds;
  bc.defaults.min_clients = config.clients;
  bc.defaults.epochs = config.epochs;
  bc.defaults.batch_size = config.batch_size;
  bc.defaults.learning_rate = config.learning_rate;
  Backend backend(bc);
  backend.start();
  const std::string url = backend.url();
  BackendClient deployer(url);

  // Fixed client fleet: same profiles and shards for every phase.
  std::vector<ClientProfile> profiles;
  for (std::uint32_t i = 0; i < config.clients; ++i) {
    ClientProfile p;
    p.client_id = "client-" + std::to_string(i);
    p.platform = std::string(i % 2 == 0 ? kIndexMapPlatform : kLayerTreePlatform);
    p.speed_factor = config.speed_factors[i % config.speed_factors.size()];
    p.device = i % 2 == 0 ? "emulated index_map device" : "emulated layer_tree device";
    p.ram = i % 2 == 0 ? "8 GB" : "4 GB";
    p.seed = config.seed * 1000u + i;
    p.emulate_layout = !config.canonical;
    profiles.push_back(p);
  }

  auto fail = [&](const std::string& what) { result.failures.push_back(what); };

  for (const TaskKind task : config.tasks) {
    const std::string data_type = data_type_for(task);
    const std::string model_name = data_type + "-mlp";
    SyntheticTask st{task, config.examples_per_client * config.clients,
                     config.seed ^ (task == TaskKind::kBlobsClassification ? 0x11ull : 0x22ull), 4};
    const std::vector<Dataset> shards = generate_shards(st, config.clients, config.partition);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> versions{{1, config.hidden_v1}};
    if (config.redeploy) versions.push_back({2, config.hidden_v2});

    for (const auto& [version, hidden] : versions) {
      const ModelPackage pkg = build_package(model_name, version, task, hidden, config.seed + version);
      deployer.upload(write_package(pkg));

      std::vector<ClientReport> reports(config.clients);
      std::vector<std::string> errors(config.clients);
      std::vector<std::thread> threads;
      for (std::uint32_t i = 0; i < config.clients; ++i) {
        threads.emplace_back([&, i] {
          try {
            reports[i] = run_client(profiles[i], url, data_type, shards[i]);
          } catch (const std::exception& e) {
            errors[i] = e.what();
          }
        });
      }
      for (std::thread& t : threads) t.join();

      PhaseResult phase;
      phase.task = task;
      phase.model_name = model_name;
      phase.version = version;
      phase.clients = reports;
      const std::string tag = model_name + " v" + std::to_string(version);
      for (std::uint32_t i = 0; i < config.clients; ++i) {
        if (!errors[i].empty()) {
          fail(tag + ": " + profiles[i].client_id + " failed: " + errors[i]);
        } else if (!reports[i].ok()) {
          fail(tag + ": " + profiles[i].client_id + " failed: " + reports[i].error);
        } else if (reports[i].model_version != version) {
          fail(tag + ": " + profiles[i].client_id + " trained version " +
               std::to_string(reports[i].model_version));
        }
      }
      if (!errors[0].empty() || reports[0].session_id.empty()) {
        result.phases.push_back(std::move(phase));
        break;
      }
      phase.session_id = reports[0].session_id;
      for (const ClientReport& r : reports) {
        if (r.session_id != phase.session_id) fail(tag + ": clients landed in different sessions");
      }
      if (auto server = backend.session_manager().find(phase.session_id)) {
        server->wait_for(std::chrono::seconds(10));
        phase.rounds = server->rounds();
        phase.final_params_digest = digest_parameters(server->global_parameters());
      }
      if (phase.rounds.size() != config.rounds) {
        fail(tag + ": expected " + std::to_string(config.rounds) + " rounds, got " +
             std::to_string(phase.rounds.size()));
      } else if (config.rounds >= 2 &&
                 !(phase.rounds.back().eval_loss < 0.5 * phase.rounds.front().eval_loss)) {
        fail(tag + ": loss_halving: round " + std::to_string(config.rounds) + " eval loss " +
             fmt(phase.rounds.back().eval_loss) + " is not below half of round 1 (" +
             fmt(phase.rounds.front().eval_loss) + ")");
      }
      result.phases.push_back(std::move(phase));
    }
  }

  result.telemetry = deployer.telemetry();
  backend.stop();

  std::ofstream(config.out_dir / "losses.csv") << losses_csv(result.phases);
  std::ofstream(config.out_dir / "telemetry.csv") << telemetry_csv(result.telemetry);
  result.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace crossfl::harness
