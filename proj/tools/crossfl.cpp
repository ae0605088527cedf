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

// crossfl command line: backend service, clients, demo and helpers.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "crossfl/backend.hpp"
#include "crossfl/backend_client.hpp"
#include "crossfl/client_runtime.hpp"
#include "crossfl/harness.hpp"
#include "crossfl/registry.hpp"

namespace {

using namespace crossfl;
namespace fs = std::filesystem;

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

std::pair<std::uint16_t, std::uint16_t> parse_range(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw Error(Errc::kInvalidArgument, "port range must be LO-HI");
  return {static_cast<std::uint16_t>(std::stoul(s.substr(0, dash))),
          static_cast<std::uint16_t>(std::stoul(s.substr(dash + 1)))};
}

int cmd_serve(const std::string& host, std::uint16_t port, const std::string& data_dir,
              const std::string& range, std::uint32_t round_timeout_s, const SessionDefaults& d) {
  BackendConfig bc;
  bc.bind_host = host;
  bc.http_port = port;
  bc.data_dir = data_dir;
  std::tie(bc.port_range_begin, bc.port_range_end) = parse_range(range);
  bc.defaults = d;
  bc.defaults.round_timeout = std::chrono::seconds(round_timeout_s);
  Backend backend(bc);
  backend.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on %s\n", backend.url().c_str());
  std::fflush(stdout);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  backend.stop();
  return 0;
}

int cmd_deploy(const std::string& url, const std::string& path) {
  const Bytes bytes = read_file(path);
  BackendClient client(url);
  const ModelSummary s = client.upload(bytes);
  std::printf("deployed %s v%u (data_type %s, digest %s)\n", s.name.c_str(), s.version,
              s.data_type.c_str(), s.params_digest.c_str());
  return 0;
}

int cmd_package(const std::string& task, const std::string& name, std::uint32_t version,
                std::uint32_t hidden, std::uint64_t seed, const std::string& out) {
  const harness::TaskKind kind = harness::parse_task(task);
  const std::string model_name = name.empty() ? harness::data_type_for(kind) + "-mlp" : name;
  const Bytes bytes = write_package(harness::build_package(model_name, version, kind, hidden, seed));
  write_file_atomic(out, bytes);
  std::printf("wrote %s (%zu bytes)\n", out.c_str(), bytes.size());
  return 0;
}

int cmd_generate(const std::string& task, std::size_t n, std::uint64_t seed, std::uint32_t k,
                 const std::string& partition, const std::string& out_dir) {
  harness::SyntheticTask st{harness::parse_task(task), n, seed, 4};
  const auto shards = harness::generate_shards(st, k, harness::parse_partition(partition));
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const fs::path p = fs::path(out_dir) / ("shard_" + std::to_string(i) + ".csv");
    harness::write_csv(shards[i], p);
    std::printf("%s: %zu rows\n", p.c_str(), shards[i].size());
  }
  return 0;
}

int cmd_client(const std::string& url, const ClientProfile& profile, const std::string& data_type,
               const std::string& shard_path) {
  const Dataset shard = harness::load_csv(shard_path);
  const ClientReport r = run_client(profile, url, data_type, shard);
  std::printf("client %s (%s) trained %s v%u in session %s on port %u\n", r.client_id.c_str(),
              r.platform.c_str(), r.model_name.c_str(), r.model_version, r.session_id.c_str(), r.port);
  std::printf("round,train_loss,eval_loss,eval_metric,wall_time_s\n");
  for (const ClientRoundLog& l : r.rounds) {
    std::printf("%u,%.6g,%.6g,%.6g,%.6g\n", l.round, l.train_loss, l.eval_loss, l.eval_metric,
                l.wall_time_s);
  }
  std::printf("layout access: index_map r/w %llu/%llu, layer_tree r/w %llu/%llu\n",
              static_cast<unsigned long long>(r.layout_counts.index_map_reads),
              static_cast<unsigned long long>(r.layout_counts.index_map_writes),
              static_cast<unsigned long long>(r.layout_counts.layer_tree_reads),
              static_cast<unsigned long long>(r.layout_counts.layer_tree_writes));
  if (!r.ok()) {
    std::fprintf(stderr, "session failed: %s\n", r.error.c_str());
    return 1;
  }
  return 0;
}

int cmd_demo(const harness::DemoConfig& config) {
  const harness::DemoResult r = harness::demo_run(config);
  for (const harness::PhaseResult& p : r.phases) {
    std::printf("%s v%u (%s): ", p.model_name.c_str(), p.version, p.session_id.c_str());
    if (!p.rounds.empty()) {
      std::printf("eval loss %.4f -> %.4f, metric %.4f -> %.4f\n", p.rounds.front().eval_loss,
                  p.rounds.back().eval_loss, p.rounds.front().eval_metric, p.rounds.back().eval_metric);
    } else {
      std::printf("no rounds\n");
    }
  }
  std::map<std::string, std::pair<double, int>> by_platform;
  for (const TelemetryRecord& t : r.telemetry) {
    auto& [sum, count] = by_platform[t.platform];
    sum += t.wall_time_s;
    ++count;
  }
  for (const auto& [platform, acc] : by_platform) {
    std::printf("mean local training time %s: %.6f s over %d rounds\n", platform.c_str(),
                acc.first / acc.second, acc.second);
  }
  std::printf("artifacts: %s, %s (%.1f s)\n", (config.out_dir / "losses.csv").c_str(),
              (config.out_dir / "telemetry.csv").c_str(), r.elapsed_s);
  for (const std::string& f : r.failures) std::fprintf(stderr, "ASSERTION FAILED: %s\n", f.c_str());
  return r.ok() ? 0 : 1;
}

int cmd_telemetry_report(const std::string& url, const std::string& data_dir,
                         const TelemetryFilter& filter) {
  std::vector<TelemetryRecord> records;
  if (!data_dir.empty()) {
    records = TelemetryStore(fs::path(data_dir) / "telemetry.jsonl").list(filter);
  } else {
    records = BackendClient(url).telemetry(filter);
  }
  struct Acc {
    std::string platform;
    std::string device;
    double sum = 0.0;
    int count = 0;
  };
  std::map<std::string, Acc> by_client;
  for (const TelemetryRecord& t : records) {
    Acc& a = by_client[t.client_id];
    a.platform = t.platform;
    a.device = t.device;
    a.sum += t.wall_time_s;
    ++a.count;
  }
  std::printf("client_id,platform,device,rounds,mean_wall_time_s\n");
  double lo = 0.0, hi = 0.0;
  for (const auto& [id, a] : by_client) {
    const double mean = a.sum / a.count;
    std::printf("%s,%s,\"%s\",%d,%.6f\n", id.c_str(), a.platform.c_str(), a.device.c_str(), a.count, mean);
    lo = lo == 0.0 ? mean : std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  if (by_client.size() >= 2 && lo > 0.0) std::printf("slowest/fastest ratio: %.3f\n", hi / lo);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossfl: cross-platform federated learning backend, clients and demo"};
  app.require_subcommand(1);
  std::string backend_url = "http://127.0.0.1:8000";

  // serve
  auto* serve = app.add_subcommand("serve", "Run the backend HTTP service");
  std::string host = "127.0.0.1", data_dir = "crossfl-data", range = "9100-9199";
  std::uint16_t http_port = 8000;
  std::uint32_t round_timeout_s = 60;
  SessionDefaults defaults;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", http_port, "HTTP port (0 = ephemeral)");
  serve->add_option("--data-dir", data_dir, "Registry and telemetry directory");
  serve->add_option("--port-range", range, "FL server port range LO-HI");
  serve->add_option("--round-timeout", round_timeout_s, "Seconds a round waits for updates");
  serve->add_option("--rounds", defaults.rounds, "Rounds per session");
  serve->add_option("--min-clients", defaults.min_clients, "Clients a session waits for");
  serve->add_option("--epochs", defaults.epochs, "Local epochs per round");
  serve->add_option("--batch-size", defaults.batch_size, "Local mini-batch size");
  serve->add_option("--lr", defaults.learning_rate, "Local learning rate");

  // deploy
  auto* deploy = app.add_subcommand("deploy", "Upload a model package to the backend");
  std::string package_path;
  deploy->add_option("package", package_path, "Package file")->required()->check(CLI::ExistingFile);
  deploy->add_option("--backend", backend_url, "Backend URL");

  // package
  auto* package = app.add_subcommand("package", "Build a demo model package");
  std::string pkg_task = "digits", pkg_name, pkg_out = "model.pkg";
  std::uint32_t pkg_version = 1, pkg_hidden = 8;
  std::uint64_t pkg_seed = 1;
  package->add_option("--task", pkg_task, "digits|sleep (or blobs_classification|sleep_regression)");
  package->add_option("--name", pkg_name, "Model name (default <data_type>-mlp)");
  package->add_option("--version", pkg_version, "Model version");
  package->add_option("--hidden", pkg_hidden, "Hidden layer width");
  package->add_option("--seed", pkg_seed, "Initialization seed");
  package->add_option("--out", pkg_out, "Output file");

  // generate
  auto* generate = app.add_subcommand("generate", "Write synthetic data shards as CSV");
  std::string gen_task = "digits", gen_partition = "iid", gen_out = "shards";
  std::size_t gen_n = 400;
  std::uint64_t gen_seed = 7;
  std::uint32_t gen_k = 2;
  generate->add_option("--task", gen_task, "digits|sleep");
  generate->add_option("--n", gen_n, "Total examples");
  generate->add_option("--seed", gen_seed, "Generator seed");
  generate->add_option("--clients", gen_k, "Number of shards");
  generate->add_option("--partition", gen_partition, "iid|label_skew");
  generate->add_option("--out-dir", gen_out, "Output directory");

  // client
  auto* client = app.add_subcommand("client", "Run one federated client to completion");
  ClientProfile profile;
  profile.client_id = "client";
  std::string data_type, shard_path;
  bool canonical = false;
  client->add_option("--platform", profile.platform, "index_map|layer_tree")->required();
  client->add_option("--data-type", data_type, "Training data type")->required();
  client->add_option("--shard", shard_path, "CSV shard")->required()->check(CLI::ExistingFile);
  client->add_option("--backend", backend_url, "Backend URL");
  client->add_option("--id", profile.client_id, "Client id");
  client->add_option("--speed-factor", profile.speed_factor, "Emulated slowdown (> 0)");
  client->add_option("--device", profile.device, "Device description");
  client->add_option("--ram", profile.ram, "RAM descriptor");
  client->add_option("--seed", profile.seed, "Local training seed");
  client->add_flag("--canonical", canonical, "Skip the platform layout round trip");

  // demo
  auto* demo = app.add_subcommand("demo", "Deploy, train, redeploy v2 and retrain in one process");
  harness::DemoConfig dc;
  std::string demo_out = dc.out_dir.string(), demo_partition = "iid";
  bool no_redeploy = false;
  demo->add_option("--seed", dc.seed, "Master seed");
  demo->add_option("--rounds", dc.rounds, "Rounds per session");
  demo->add_option("--clients", dc.clients, "Number of clients");
  demo->add_option("--epochs", dc.epochs, "Local epochs");
  demo->add_option("--examples", dc.examples_per_client, "Examples per client");
  demo->add_option("--partition", demo_partition, "iid|label_skew");
  demo->add_option("--out-dir", demo_out, "Artifact directory");
  demo->add_option("--port-range", range, "FL server port range LO-HI");
  demo->add_flag("--canonical", dc.canonical, "Clients skip the platform layouts");
  demo->add_flag("--no-redeploy", no_redeploy, "Skip the v2 phase");

  // telemetry-report
  auto* report = app.add_subcommand("telemetry-report", "Summarize client training times");
  std::string report_dir;
  TelemetryFilter filter;
  report->add_option("--backend", backend_url, "Backend URL");
  report->add_option("--data-dir", report_dir, "Read the telemetry log directly instead");
  report->add_option("--platform", filter.platform, "Only this platform");
  report->add_option("--session", filter.session_id, "Only this session");

  // sessions
  auto* sessions = app.add_subcommand("sessions", "List FL sessions");
  sessions->add_option("--backend", backend_url, "Backend URL");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(host, http_port, data_dir, range, round_timeout_s, defaults);
    if (*deploy) return cmd_deploy(backend_url, package_path);
    if (*package) return cmd_package(pkg_task, pkg_name, pkg_version, pkg_hidden, pkg_seed, pkg_out);
    if (*generate) return cmd_generate(gen_task, gen_n, gen_seed, gen_k, gen_partition, gen_out);
    if (*client) {
      profile.emulate_layout = !canonical;
      return cmd_client(backend_url, profile, data_type, shard_path);
    }
    if (*demo) {
      dc.out_dir = demo_out;
      dc.partition = harness::parse_partition(demo_partition);
      dc.redeploy = !no_redeploy;
      std::tie(dc.port_range_begin, dc.port_range_end) = parse_range(range);
      return cmd_demo(dc);
    }
    if (*report) return cmd_telemetry_report(backend_url, report_dir, filter);
    if (*sessions) {
      std::printf("session_id,name,version,port,status,round\n");
      for (const SessionRecord& s : BackendClient(backend_url).sessions()) {
        std::printf("%s,%s,%u,%u,%s,%u\n", s.session_id.c_str(), s.model_name.c_str(), s.model_version,
                    s.port, std::string(to_string(s.status.state)).c_str(), s.status.round);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
