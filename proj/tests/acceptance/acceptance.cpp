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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "crossfl/backend.hpp"
#include "crossfl/backend_client.hpp"
#include "crossfl/harness.hpp"
#include "crossfl/registry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace crossfl;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Child process with stdout (and optionally stderr) on a pipe.
class Process {
 public:
  explicit Process(const std::vector<std::string>& args, bool capture_stderr = true) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      if (capture_stderr) ::dup2(fds[1], STDERR_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      std::vector<char*> argv;
      for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
      argv.push_back(nullptr);
      ::execv(argv[0], argv.data());
      std::perror("execv");
      ::_exit(127);
    }
    ::close(fds[1]);
    out_ = fds[0];
  }
  ~Process() {
    if (pid_ > 0 && !reaped_) {
      ::kill(pid_, SIGKILL);
      wait();
    }
    if (out_ >= 0) ::close(out_);
  }
  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;

  // Next line of output, or nullopt on EOF or timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0 || !fill(static_cast<int>(left))) return std::nullopt;
    }
  }

  std::string read_all(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0 || !fill(static_cast<int>(left))) break;
    }
    return std::exchange(buffer_, {});
  }

  void signal(int sig) { ::kill(pid_, sig); }

  // Exit status, or 128 + signal number.
  int wait() {
    if (reaped_) return status_;
    int st = 0;
    ::waitpid(pid_, &st, 0);
    reaped_ = true;
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + WTERMSIG(st);
    return status_;
  }

 private:
  bool fill(int timeout_ms) {
    pollfd p{out_, POLLIN, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) return false;
    char buf[4096];
    const ssize_t n = ::read(out_, buf, sizeof buf);
    if (n <= 0) return false;
    buffer_.append(buf, static_cast<std::size_t>(n));
    return true;
  }

  pid_t pid_ = -1;
  int out_ = -1;
  std::string buffer_;
  bool reaped_ = false;
  int status_ = -1;
};

std::string cli() { return CROSSFL_CLI_PATH; }

// Runs a CLI command to completion; returns (exit code, output).
std::pair<int, std::string> run_cli(const std::vector<std::string>& args, std::chrono::seconds timeout = 60s) {
  std::vector<std::string> full{cli()};
  full.insert(full.end(), args.begin(), args.end());
  Process p(full);
  std::string out = p.read_all(timeout);
  return {p.wait(), out};
}

void expect_cli(const std::vector<std::string>& args) {
  const auto [code, out] = run_cli(args);
  if (code != 0) throw std::runtime_error("crossfl " + args[0] + " exited " + std::to_string(code) + ": " + out);
}

// `crossfl serve` on an ephemeral HTTP port; url() is parsed from its banner.
class Server {
 public:
  Server(const fs::path& data_dir, std::uint16_t range_begin, std::vector<std::string> extra) {
    std::vector<std::string> args{cli(), "serve", "--port", "0", "--data-dir", data_dir.string(), "--port-range",
                                  std::to_string(range_begin) + "-" + std::to_string(range_begin + 19)};
    args.insert(args.end(), extra.begin(), extra.end());
    proc_ = std::make_unique<Process>(args, false);
    const auto line = proc_->read_line(15s);
    const std::string prefix = "listening on ";
    if (!line || line->rfind(prefix, 0) != 0) throw std::runtime_error("serve did not start");
    url_ = line->substr(prefix.size());
  }
  const std::string& url() const { return url_; }
  Process& process() { return *proc_; }

 private:
  std::unique_ptr<Process> proc_;
  std::string url_;
};

std::uint16_t port_base(int slot) {
  static const std::uint16_t base = [] {
    std::random_device rd;
    return static_cast<std::uint16_t>(20000 + (rd() % 200) * 200);
  }();
  return static_cast<std::uint16_t>(base + slot * 20);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", n, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

harness::DemoConfig demo_defaults(const fs::path& out, int slot) {
  harness::DemoConfig c;
  c.out_dir = out;
  c.port_range_begin = port_base(slot);
  c.port_range_end = static_cast<std::uint16_t>(c.port_range_begin + 19);
  return c;
}

}  // namespace

int main() {
  testutil::TempDir work("acceptance");

  // The default demo (mixed layouts, speed factors 5.46 and 1.0, v1 then v2)
  // feeds criteria 1, 4 and 5.
  const auto demo_start = Clock::now();
  const harness::DemoResult mixed = harness::demo_run(demo_defaults(work.path() / "mixed", 0));
  const double mixed_s = seconds_since(demo_start);

  report(1, "cross-platform aggregation equivalence", [&] {
    harness::DemoConfig c = demo_defaults(work.path() / "canonical", 1);
    c.canonical = true;
    const auto t0 = Clock::now();
    const harness::DemoResult canonical = harness::demo_run(c);
    const double canonical_s = seconds_since(t0);
    const bool csv_equal =
        slurp(work.path() / "mixed" / "losses.csv") == slurp(work.path() / "canonical" / "losses.csv");
    bool params_equal = mixed.phases.size() == canonical.phases.size() && !mixed.phases.empty();
    for (std::size_t i = 0; params_equal && i < mixed.phases.size(); ++i) {
      params_equal = mixed.phases[i].final_params_digest == canonical.phases[i].final_params_digest;
    }
    // Final parameters as persisted by each backend, compared bit for bit.
    const Registry rm(work.path() / "mixed" / "backend"), rc(work.path() / "canonical" / "backend");
    for (const ModelRecord& r : rm.list()) {
      params_equal = params_equal && bit_equal(rm.current_parameters(r.manifest.name, r.manifest.version),
                                               rc.current_parameters(r.manifest.name, r.manifest.version));
    }
    std::size_t layer_tree_writes = 0;
    for (const auto& p : mixed.phases) {
      for (const auto& cr : p.clients) layer_tree_writes += cr.layout_counts.layer_tree_writes;
    }
    const bool fast = mixed_s < 30.0 && canonical_s < 30.0;
    return Outcome{csv_equal && params_equal && layer_tree_writes > 0 && fast,
                   "losses.csv identical: " + std::string(csv_equal ? "yes" : "no") +
                       ", final parameters bit-identical: " + (params_equal ? "yes" : "no") +
                       ", layer_tree writes " + std::to_string(layer_tree_writes) + ", runtimes " +
                       fmt("%.2f", mixed_s) + " s / " + fmt("%.2f", canonical_s) + " s"};
  });

  report(2, "FedAvg against a brute-force weighted mean", [] {
    const auto t0 = Clock::now();
    const oracles::FedAvgCheck f = oracles::check_fedavg(2024, 200);
    const double s = seconds_since(t0);
    return Outcome{f.lists == 200 && f.worst_rel_err <= 1e-12 && f.order_independent && f.cast_matches && s < 5.0,
                   std::to_string(f.lists) + " lists, worst relative error " + fmt("%.3g", f.worst_rel_err) +
                       ", order independent: " + (f.order_independent ? "yes" : "no") + ", " + fmt("%.2f", s) + " s"};
  });

  report(3, "gradient checks on 50 random networks", [] {
    const auto t0 = Clock::now();
    const oracles::GradientCheck g = oracles::check_gradients(31337, 50, 1e-5);
    const double s = seconds_since(t0);
    return Outcome{g.failures.empty() && s < 10.0,
                   std::to_string(g.coordinates) + " coordinates, worst relative error " +
                       fmt("%.3g", g.worst_rel_err) + ", " + std::to_string(g.failures.size()) + " above 1e-5, " +
                       fmt("%.2f", s) + " s"};
  });

  report(4, "demo defaults halve the eval loss on both tasks", [&] {
    std::set<harness::TaskKind> halved;
    std::string detail;
    bool ok = mixed.phases.size() >= 2;
    for (const auto& p : mixed.phases) {
      if (p.rounds.size() != 10) {
        ok = false;
        continue;
      }
      const double first = p.rounds.front().eval_loss, last = p.rounds.back().eval_loss;
      const bool h = last < 0.5 * first;
      if (h && p.version == 1) halved.insert(p.task);
      ok = ok && h;
      detail += p.model_name + " v" + std::to_string(p.version) + " " + fmt("%.4f", first) + " -> " +
                fmt("%.4f", last) + "; ";
    }
    ok = ok && halved.size() == 2 && mixed_s < 60.0;
    return Outcome{ok, detail + fmt("%.2f", mixed_s) + " s"};
  });

  report(5, "telemetry heterogeneity ratio", [&] {
    std::map<std::string, std::pair<double, int>> by_platform;
    for (const TelemetryRecord& t : mixed.telemetry) {
      by_platform[t.platform].first += t.wall_time_s;
      ++by_platform[t.platform].second;
    }
    const auto& slow = by_platform["index_map"];  // speed factor 5.46
    const auto& fast = by_platform["layer_tree"];  // speed factor 1.0
    if (slow.second == 0 || fast.second == 0) return Outcome{false, "missing telemetry"};
    const double ratio = (slow.first / slow.second) / (fast.first / fast.second);
    return Outcome{ratio >= 5.46 * 0.8 && ratio <= 5.46 * 1.2,
                   "mean wall time " + fmt("%.6f", slow.first / slow.second) + " s vs " +
                       fmt("%.6f", fast.first / fast.second) + " s, ratio " + fmt("%.3f", ratio) +
                       " (target 5.46 +/- 20%)"};
  });

  report(6, "new model version reaches unchanged clients", [&] {
    const fs::path dir = work.path() / "delivery";
    fs::create_directories(dir);
    Server server(dir / "data", port_base(2),
                  {"--rounds", "3", "--min-clients", "2", "--epochs", "1", "--round-timeout", "30"});
    expect_cli({"package", "--task", "sleep", "--version", "1", "--hidden", "8", "--out", (dir / "v1.pkg").string()});
    expect_cli({"package", "--task", "sleep", "--version", "2", "--hidden", "16", "--out", (dir / "v2.pkg").string()});
    expect_cli({"generate", "--task", "sleep", "--n", "200", "--clients", "2", "--out-dir", (dir / "shards").string()});
    expect_cli({"deploy", (dir / "v1.pkg").string(), "--backend", server.url()});

    // The same two client command lines run before and after the v2 upload.
    auto run_clients = [&] {
      std::vector<std::unique_ptr<Process>> procs;
      const char* platforms[2] = {"index_map", "layer_tree"};
      for (int i = 0; i < 2; ++i) {
        procs.push_back(std::make_unique<Process>(std::vector<std::string>{
            cli(), "client", "--platform", platforms[i], "--data-type", "sleep", "--shard",
            (dir / "shards" / ("shard_" + std::to_string(i) + ".csv")).string(), "--backend", server.url(), "--id",
            "device-" + std::to_string(i), "--seed", std::to_string(i)}));
      }
      std::vector<std::string> outputs;
      bool ok = true;
      for (auto& p : procs) {
        outputs.push_back(p->read_all(120s));
        ok = ok && p->wait() == 0;
      }
      return std::make_pair(ok, outputs);
    };
    auto trained = [](const std::vector<std::string>& outs, const std::string& what) {
      for (const auto& o : outs) {
        if (o.find("trained " + what + " ") == std::string::npos) return false;
      }
      return true;
    };

    const auto [ok1, out1] = run_clients();
    BackendClient api(server.url());
    const std::uint32_t before = api.advertise("sleep", "layer_tree").version;
    expect_cli({"deploy", (dir / "v2.pkg").string(), "--backend", server.url()});
    const std::uint32_t after_im = api.advertise("sleep", "index_map").version;
    const std::uint32_t after_lt = api.advertise("sleep", "layer_tree").version;
    const auto [ok2, out2] = run_clients();
    const bool v1 = ok1 && trained(out1, "sleep-mlp v1");
    const bool v2 = ok2 && trained(out2, "sleep-mlp v2");
    std::uint32_t v2_revision = 0;
    for (const auto& m : api.list_models()) {
      if (m.version == 2) v2_revision = m.revision;
    }
    const bool pass = v1 && v2 && before == 1 && after_im == 2 && after_lt == 2 && v2_revision == 1;
    std::string detail = "advertised v" + std::to_string(before) + " then v" + std::to_string(after_im) + "/v" +
                         std::to_string(after_lt) + "; clients trained v1: " + (v1 ? "yes" : "no") +
                         ", v2: " + (v2 ? "yes" : "no") + ", v2 revision " + std::to_string(v2_revision);
    if (!pass) {
      for (const auto& o : out1) detail += "\n  " + o;
      for (const auto& o : out2) detail += "\n  " + o;
    }
    return Outcome{pass, detail};
  });

  report(7, "session reuse and spawn", [&] {
    BackendConfig bc;
    bc.http_port = 0;
    bc.data_dir = work.path() / "sessions";
    bc.port_range_begin = port_base(3);
    bc.port_range_end = static_cast<std::uint16_t>(bc.port_range_begin + 19);
    bc.defaults.rounds = 1;
    bc.defaults.min_clients = 1;
    bc.defaults.round_timeout = 20s;
    Backend backend(bc);
    backend.start();
    backend.upload_model(write_package(harness::build_package("digits-mlp", 1, harness::TaskKind::kBlobsClassification, 8, 1)));
    backend.upload_model(write_package(harness::build_package("sleep-mlp", 1, harness::TaskKind::kSleepRegression, 8, 1)));

    std::vector<TrainTicket> tickets(16);
    std::vector<std::thread> threads;
    for (int i = 0; i < 16; ++i) {
      threads.emplace_back([&, i] { tickets[i] = BackendClient(backend.url()).request_training("digits-mlp", 1); });
    }
    for (auto& t : threads) t.join();
    std::set<std::pair<std::string, std::uint16_t>> distinct;
    for (const auto& t : tickets) distinct.insert({t.session_id, t.port});
    const bool one_session = distinct.size() == 1 && backend.sessions().size() == 1;

    const TrainTicket sleep = backend.request_training("sleep-mlp", 1);
    const bool distinct_ports = sleep.port != tickets[0].port && !sleep.reused;

    // Finish the digits session with one real client, then ask again.
    ClientProfile p;
    p.client_id = "finisher";
    p.platform = "layer_tree";
    const Dataset shard = harness::generate({harness::TaskKind::kBlobsClassification, 40, 3, 4});
    const ClientReport r = run_client(p, backend.url(), "digits", shard);
    const TrainTicket again = backend.request_training("digits-mlp", 1);
    const bool fresh = r.ok() && r.session_id == tickets[0].session_id && !again.reused &&
                       again.session_id != tickets[0].session_id && again.port != tickets[0].port;
    return Outcome{one_session && distinct_ports && fresh,
                   "16 concurrent requests -> " + std::to_string(distinct.size()) + " session(s); ports " +
                       std::to_string(tickets[0].port) + " and " + std::to_string(sleep.port) +
                       "; after finish: new session on port " + std::to_string(again.port)};
  });

  report(8, "protocol round trip", [] {
    std::size_t golden_ok = 0, random_ok = 0, cuts = 0, truncated = 0;
    const auto golden = oracles::golden_messages();
    for (const auto& [file, m] : golden) {
      const Bytes bytes = testutil::read_bytes(testutil::golden(file));
      const auto d = protocol::decode_frame(bytes);
      if (protocol::encode_frame(m) == bytes && d.message == m && d.consumed == bytes.size()) ++golden_ok;
    }
    std::mt19937_64 rng(1234);
    std::vector<Bytes> frames;
    for (int i = 0; i < 1000; ++i) {
      const protocol::Message m = oracles::random_message(rng);
      const Bytes f = protocol::encode_frame(m);
      if (protocol::decode_frame(f).message == m) ++random_ok;
      frames.push_back(f);
    }
    for (const auto& [file, m] : golden) frames.push_back(protocol::encode_frame(m));
    for (const Bytes& f : frames) {
      for (std::size_t cut = 0; cut < f.size(); ++cut) {
        ++cuts;
        try {
          protocol::decode_frame(std::span(f.data(), cut));
        } catch (const Error& e) {
          if (e.code() == Errc::kTruncated) ++truncated;
        }
      }
    }
    return Outcome{golden_ok == golden.size() && random_ok == 1000 && truncated == cuts,
                   std::to_string(golden_ok) + "/" + std::to_string(golden.size()) + " golden frames, " +
                       std::to_string(random_ok) + "/1000 random messages, " + std::to_string(truncated) + "/" +
                       std::to_string(cuts) + " prefixes Truncated"};
  });

  report(9, "backend state survives a kill and restart", [&] {
    const fs::path dir = work.path() / "durability";
    fs::create_directories(dir);
    const std::vector<std::string> opts{"--rounds", "1", "--min-clients", "1", "--epochs", "1"};
    expect_cli({"package", "--task", "sleep", "--version", "1", "--out", (dir / "sleep.pkg").string()});
    expect_cli({"package", "--task", "digits", "--version", "1", "--out", (dir / "digits.pkg").string()});
    expect_cli({"generate", "--task", "sleep", "--n", "60", "--clients", "1", "--out-dir", (dir / "shards").string()});

    struct Snapshot {
      std::vector<std::string> models;
      std::vector<std::string> telemetry;
      std::vector<std::string> downloads;
      bool operator==(const Snapshot&) const = default;
    };
    auto snapshot = [](const std::string& url) {
      BackendClient api(url);
      Snapshot s;
      for (const ModelSummary& m : api.list_models()) {
        s.models.push_back(m.name + " v" + std::to_string(m.version) + " rev " + std::to_string(m.revision) + " " +
                           m.params_digest);
        for (const char* platform : {"index_map", "layer_tree"}) {
          const DownloadedModel d = api.download(m.name, m.version, platform);
          s.downloads.push_back(m.name + "/" + platform + " rev " + std::to_string(d.revision) + " " +
                                sha256_hex(d.variant));
        }
      }
      for (const TelemetryRecord& t : api.telemetry()) s.telemetry.push_back(telemetry_to_json(t));
      return s;
    };

    Snapshot before;
    std::string manifest_digest;
    {
      Server server(dir / "data", port_base(4), opts);
      BackendClient api(server.url());
      manifest_digest = api.upload(read_file(dir / "sleep.pkg")).params_digest;
      api.upload(read_file(dir / "digits.pkg"));
      const auto [code, out] = run_cli({"client", "--platform", "layer_tree", "--data-type", "sleep", "--shard",
                                        (dir / "shards" / "shard_0.csv").string(), "--backend", server.url(), "--id",
                                        "iphone", "--device", "emulated iPhone 13", "--ram", "4GB"});
      if (code != 0) return Outcome{false, "client failed: " + out};
      api.post_telemetry({"iphone", "layer_tree", "emulated iPhone 13", "4GB", "manual", 1, 0.656});
      api.post_telemetry({"nova", "index_map", "emulated Nova 9 Pro", "8GB", "manual", 1, 3.583});
      before = snapshot(server.url());
      server.process().signal(SIGKILL);
      if (server.process().wait() != 128 + SIGKILL) return Outcome{false, "backend was not killed"};
    }
    Server restarted(dir / "data", port_base(5), opts);
    const Snapshot after = snapshot(restarted.url());
    restarted.process().signal(SIGTERM);
    const int exit_code = restarted.process().wait();

    bool revised = false;
    for (const auto& m : after.models) {
      revised = revised || (m.rfind("sleep-mlp v1 rev 1 ", 0) == 0 && m.find(manifest_digest) == std::string::npos);
    }
    const bool pass = before == after && before.models.size() == 2 && before.telemetry.size() == 3 && revised &&
                      exit_code == 0;
    return Outcome{pass, std::to_string(after.models.size()) + " models, " + std::to_string(after.downloads.size()) +
                             " downloads, " + std::to_string(after.telemetry.size()) +
                             " telemetry records identical after SIGKILL: " + (before == after ? "yes" : "no") +
                             "; trained revision kept: " + (revised ? "yes" : "no")};
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
