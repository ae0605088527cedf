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

#include <future>
#include <httplib.h>
#include <random>
#include <set>
#include <thread>

#include "crossfl/backend.hpp"
#include "crossfl/client_runtime.hpp"
#include "crossfl/net.hpp"
#include "test_util.hpp"

using namespace crossfl;
using namespace std::chrono_literals;
using testutil::error_code_of;
using testutil::error_of;

namespace {

BackendConfig test_config(const std::filesystem::path& dir) {
  std::random_device rd;
  BackendConfig c;
  c.http_port = 0;
  c.data_dir = dir;
  c.port_range_begin = static_cast<std::uint16_t>(20000 + (rd() % 400) * 100);
  c.port_range_end = static_cast<std::uint16_t>(c.port_range_begin + 19);
  c.defaults.rounds = 3;
  c.defaults.min_clients = 2;
  c.defaults.epochs = 2;
  c.defaults.batch_size = 8;
  c.defaults.learning_rate = 0.05;
  c.defaults.round_timeout = 20s;
  return c;
}

Dataset regression_shard(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Dataset d{Matrix(n, 3), Matrix(n, 1)};
  for (double& v : d.x.data) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) d.y.row(i)[0] = 0.8 * d.x.row(i)[0] - 0.4 * d.x.row(i)[1] + 0.1;
  return d;
}

ClientProfile profile(const std::string& id, const std::string& platform, double speed = 1.0) {
  ClientProfile p;
  p.client_id = id;
  p.platform = platform;
  p.speed_factor = speed;
  p.device = "emulated " + platform;
  p.ram = "4GB";
  p.seed = std::hash<std::string>{}(id);
  return p;
}

RetryPolicy fast_retry() {
  RetryPolicy r;
  r.initial_backoff = 5ms;
  r.connect_timeout = 500ms;
  return r;
}

std::uint16_t closed_port() {
  net::Listener l("127.0.0.1", 0);
  const std::uint16_t port = l.port();
  l.shutdown();
  l.close();
  return port;
}

}  // namespace

TEST_CASE("profile validation") {
  CHECK_NOTHROW(validate_profile(profile("a", "index_map")));
  CHECK(error_code_of([] { validate_profile(profile("", "index_map")); }) == Errc::kInvalidArgument);
  CHECK(error_code_of([] { validate_profile(profile("a", "wasm")); }) == Errc::kInvalidArgument);
  CHECK(error_code_of([] { validate_profile(profile("a", "index_map", 0.0)); }) == Errc::kInvalidArgument);
  CHECK(error_code_of([] { validate_profile(profile("a", "index_map", -2.0)); }) == Errc::kInvalidArgument);
}

TEST_CASE("round seeds are deterministic and distinct per round") {
  CHECK(round_seed(7, 1) == round_seed(7, 1));
  std::set<std::uint64_t> seen;
  for (std::uint32_t r = 0; r < 100; ++r) seen.insert(round_seed(7, r));
  CHECK(seen.size() == 100);
  CHECK(round_seed(7, 1) != round_seed(8, 1));
}

TEST_CASE("speed pacer: factor 1 adds nothing, larger factors scale device time") {
  SpeedPacer unit(1.0);
  for (int i = 0; i < 10; ++i) unit.on_step(0.002);
  unit.flush();
  CHECK(unit.injected_s() == 0.0);
  CHECK(unit.device_time_s() == doctest::Approx(0.02));

  SpeedPacer slow(5.46);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 20; ++i) slow.on_step(0.001);
  slow.flush();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double owed = 4.46 * 0.020;
  CHECK(slow.injected_s() >= owed);
  CHECK(slow.injected_s() <= owed * 1.2);
  CHECK(elapsed >= slow.injected_s() * 0.99);
  const double ratio = slow.device_time_s() / 0.020;
  CHECK(ratio == doctest::Approx(5.46).epsilon(0.2));

  slow.reset();
  CHECK(slow.device_time_s() == 0.0);

  // Across rounds the waited total tracks the owed total: oversleep in one
  // round is credited against the next.
  SpeedPacer paced(3.0);
  double injected = 0.0;
  for (int round = 0; round < 5; ++round) {
    paced.reset();
    for (int i = 0; i < 10; ++i) paced.on_step(0.0005);
    paced.flush();
    injected += paced.injected_s();
  }
  CHECK(injected >= 5 * 2.0 * 0.005);
  CHECK(injected <= 5 * 2.0 * 0.005 + 0.02);
  CHECK(error_code_of([] { SpeedPacer(0.0); }) == Errc::kInvalidArgument);
}

TEST_CASE("two clients on different layouts train a session end to end") {
  testutil::TempDir dir("client");
  Backend b(test_config(dir.path()));
  b.start();
  b.upload_model(write_package(testutil::sample_package("sleep-mlp", 1, "sleep", 4, 6)));

  auto run = [&](ClientProfile p, std::uint64_t data_seed) {
    return std::async(std::launch::async, [&b, p, data_seed] {
      return run_client(p, b.url(), "sleep", regression_shard(data_seed, 48));
    });
  };
  auto fa = run(profile("android-0", "index_map", 2.0), 1);
  auto fb = run(profile("ios-0", "layer_tree"), 2);
  const ClientReport a = fa.get();
  const ClientReport c = fb.get();
  REQUIRE(a.ok());
  REQUIRE(c.ok());
  CHECK(a.session_id == c.session_id);
  CHECK(a.model_name == "sleep-mlp");
  REQUIRE(a.rounds.size() == 3);
  REQUIRE(c.rounds.size() == 3);
  CHECK(a.telemetry_posted == 3);

  // Each client stores parameters only through its own layout.
  CHECK(a.layout_counts.index_map_writes > 0);
  CHECK(a.layout_counts.layer_tree_writes == 0);
  CHECK(c.layout_counts.layer_tree_writes > 0);
  CHECK(c.layout_counts.layer_tree_reads > 0);
  CHECK(c.layout_counts.index_map_writes == 0);

  // What the clients report equals what the server logged.
  const auto server = b.session_manager().find(a.session_id);
  REQUIRE(server != nullptr);
  const auto rounds = server->rounds();
  REQUIRE(rounds.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    REQUIRE(rounds[r].clients.size() == 2);
    const ClientRoundStats& sa = rounds[r].clients[0];  // "android-0" sorts first
    const ClientRoundStats& sc = rounds[r].clients[1];
    CHECK(sa.client_id == "android-0");
    CHECK(sa.platform == "index_map");
    CHECK(sc.platform == "layer_tree");
    CHECK(sa.train_loss == a.rounds[r].train_loss);
    CHECK(sa.eval_loss == a.rounds[r].eval_loss);
    CHECK(sa.wall_time_s == a.rounds[r].wall_time_s);
    CHECK(sc.eval_loss == c.rounds[r].eval_loss);
    CHECK(sc.num_examples == 48);
  }
  CHECK(rounds[2].eval_loss < rounds[0].eval_loss);

  TelemetryFilter f;
  f.session_id = a.session_id;
  f.platform = "layer_tree";
  const auto t = b.list_telemetry(f);
  REQUIRE(t.size() == 3);
  CHECK(t[0].client_id == "ios-0");
  CHECK(t[0].device == "emulated layer_tree");
  CHECK(t[0].wall_time_s == c.rounds[0].wall_time_s);

  // The finished session persisted a revision the next download picks up.
  CHECK(b.advertise_model("sleep", "index_map").revision == 1);
  CHECK(b.advertise_model("sleep", "index_map").params_digest ==
        digest_parameters(server->global_parameters()));
}

TEST_CASE("batch size larger than the shard is clamped") {
  testutil::TempDir dir("client");
  BackendConfig cfg = test_config(dir.path());
  cfg.defaults.min_clients = 1;
  cfg.defaults.rounds = 1;
  cfg.defaults.batch_size = 64;
  Backend b(cfg);
  b.start();
  b.upload_model(write_package(testutil::sample_package("sleep-mlp", 1, "sleep")));
  const ClientReport r = run_client(profile("tiny", "layer_tree"), b.url(), "sleep", regression_shard(3, 5));
  CHECK(r.ok());
}

TEST_CASE("unreachable backend: bounded retries then BackendUnreachable") {
  const std::string url = "http://127.0.0.1:" + std::to_string(closed_port());
  BackendClient c(url, fast_retry());
  CHECK(error_code_of([&] { c.list_models(); }) == Errc::kBackendUnreachable);
  CHECK(c.last_attempts() == 4);

  ClientOptions o;
  o.retry = fast_retry();
  const Error e = error_of([&] { run_client(profile("a", "index_map"), url, "sleep", regression_shard(1, 4), o); });
  CHECK(e.code() == Errc::kBackendUnreachable);
}

TEST_CASE("errors before the session starts are thrown") {
  testutil::TempDir dir("client");
  Backend b(test_config(dir.path()));
  b.start();
  CHECK(error_code_of([&] { run_client(profile("a", "index_map"), b.url(), "sleep", regression_shard(1, 4)); }) ==
        Errc::kNoModelForDataType);
  b.upload_model(write_package(testutil::sample_package("sleep-mlp", 1, "sleep")));
  CHECK(error_code_of([&] { run_client(profile("a", "index_map"), b.url(), "sleep", Dataset{}); }) ==
        Errc::kEmptyDataset);
}

TEST_CASE("a rejected join surfaces as SessionRejected") {
  testutil::TempDir dir("client");
  Backend b(test_config(dir.path()));
  b.start();
  b.upload_model(write_package(testutil::sample_package("sleep-mlp", 1, "sleep")));

  // Two clients with the same id: whichever joins second is turned away, and
  // the first is released when the backend shuts the waiting session down.
  auto launch = [&] {
    return std::async(std::launch::async, [&b] {
      try {
        run_client(profile("dup", "index_map"), b.url(), "sleep", regression_shard(1, 8));
        return std::string("finished");
      } catch (const Error& e) {
        return std::string(errc_name(e.code())) + "|" + e.what();
      }
    });
  };
  auto first = launch();
  auto second = launch();
  std::string rejected;
  for (auto* f : {&first, &second}) {
    if (f->wait_for(3s) == std::future_status::ready) rejected = f->get();
  }
  CHECK(rejected.rfind("SessionRejected|", 0) == 0);
  CHECK(rejected.find("already admitted") != std::string::npos);
  b.session_manager().stop_all();
  for (auto* f : {&first, &second}) {
    if (f->valid()) CHECK(f->get().rfind("SessionRejected|", 0) == 0);
  }
}

TEST_CASE("schema digest disagreeing with the advertisement is rejected") {
  const ModelPackage pkg = testutil::sample_package("sleep-mlp", 1, "sleep");
  httplib::Server fake;
  fake.Get("/api/models", [&](const httplib::Request&, httplib::Response& res) {
    ModelAdvertisement a;
    a.name = "sleep-mlp";
    a.version = 1;
    a.data_type = "sleep";
    a.platform = "index_map";
    a.download_path = "/api/models/sleep-mlp/1/index_map";
    a.schema_digest = std::string(64, '0');
    a.params_digest = pkg.manifest.params_digest;
    res.set_content(advertisement_to_json(a), "application/json");
  });
  fake.Get("/api/models/sleep-mlp/1/index_map", [&](const httplib::Request&, httplib::Response& res) {
    DownloadedModel d{pkg.manifest, "index_map", encode_tensors(package_parameters(pkg)), 0,
                      pkg.manifest.params_digest};
    const Bytes body = encode_download(d);
    res.set_content(std::string(body.begin(), body.end()), "application/zip");
  });
  const int port = fake.bind_to_any_port("127.0.0.1");
  std::thread t([&] { fake.listen_after_bind(); });
  fake.wait_until_ready();
  const Error e = error_of([&] {
    run_client(profile("a", "index_map"), "http://127.0.0.1:" + std::to_string(port), "sleep",
               regression_shard(1, 4));
  });
  fake.stop();
  t.join();
  CHECK(e.code() == Errc::kSessionRejected);
  CHECK(e.cause() == Errc::kDigestMismatch);
}
