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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "crossfl/fl_server.hpp"
#include "crossfl/model_package.hpp"
#include "crossfl/registry.hpp"
#include "crossfl/telemetry.hpp"

namespace httplib {
class Server;
}

namespace crossfl {

struct ModelAdvertisement {
  std::string name;
  std::uint32_t version = 0;
  std::string data_type;
  std::string platform;
  std::string download_path;  // relative to the backend URL
  std::string schema_digest;
  std::string params_digest;  // of the current revision
  std::uint32_t revision = 0;
  std::string architecture;   // e.g. "3-16-1 relu,identity mse"

  bool operator==(const ModelAdvertisement&) const = default;
};

std::string advertisement_to_json(const ModelAdvertisement& a);
ModelAdvertisement advertisement_from_json(std::string_view text);
std::string architecture_summary(const Architecture& arch, LossKind loss);

// Body of a model download: the manifest plus one platform variant holding
// the current parameter revision.
struct DownloadedModel {
  ModelManifest manifest;
  std::string platform;
  Bytes variant;
  std::uint32_t revision = 0;
  std::string params_digest;  // sha256 of `variant`
};

Bytes encode_download(const DownloadedModel& d);
// Throws kDigestMismatch if the variant does not hash to params_digest,
// kSchemaMismatch on a malformed bundle.
DownloadedModel decode_download(std::span<const std::uint8_t> bytes);

// Session table defaults applied to every spawned FL server.
struct SessionDefaults {
  std::uint32_t rounds = 10;
  std::uint32_t min_clients = 2;
  std::uint32_t epochs = 2;
  std::uint32_t batch_size = 16;
  double learning_rate = 0.05;
  std::chrono::milliseconds round_timeout{60000};
};

struct TrainOverrides {
  std::optional<std::uint32_t> rounds;
  std::optional<std::uint32_t> min_clients;
  std::optional<std::uint32_t> epochs;
  std::optional<std::uint32_t> batch_size;
  std::optional<double> learning_rate;
};

struct TrainTicket {
  std::string session_id;
  std::uint16_t port = 0;
  bool reused = false;
};

struct SessionRecord {
  std::string session_id;
  std::string model_name;
  std::uint32_t model_version = 0;
  std::uint16_t port = 0;
  SessionStatus status;
  std::int64_t created_at_ms = 0;
};

struct BackendConfig {
  std::string bind_host = "127.0.0.1";
  std::uint16_t http_port = 8000;  // 0 = ephemeral
  std::uint16_t port_range_begin = 9100;
  std::uint16_t port_range_end = 9199;  // inclusive
  std::filesystem::path data_dir = "crossfl-data";
  SessionDefaults defaults;
};

// Reuse-or-spawn table of FL servers. A session is reused while it is
// waiting or running for the same (name, version); anything terminal is
// never reused. Ports are taken by a linear scan of the range starting just
// past the last port handed out, skipping ports that fail to bind.
class SessionManager {
 public:
  SessionManager(Registry& registry, const BackendConfig& config);
  ~SessionManager();

  // Throws kNotFound, kPortRangeExhausted.
  TrainTicket request_training(const std::string& name, std::uint32_t version,
                               const TrainOverrides& overrides = {});
  std::vector<SessionRecord> list() const;
  // Null if unknown.
  std::shared_ptr<FlServer> find(const std::string& session_id) const;
  void stop_all();

 private:
  struct Entry {
    SessionRecord record;
    std::shared_ptr<FlServer> server;
  };

  Registry& registry_;
  BackendConfig config_;
  mutable std::mutex mu_;
  std::vector<Entry> sessions_;
  std::uint16_t cursor_;
  std::uint64_t counter_ = 0;
};

// The coordinating service. Every operation is callable directly and over
// HTTP once start() has run.
class Backend {
 public:
  explicit Backend(BackendConfig config);
  ~Backend();
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  // Binds the HTTP port and serves on a background thread. Throws
  // kPortUnavailable.
  void start();
  void stop();
  std::uint16_t http_port() const { return http_port_; }
  std::string url() const;

  ModelRecord upload_model(std::span<const std::uint8_t> package_bytes);
  ModelAdvertisement advertise_model(const std::string& data_type, const std::string& platform) const;
  DownloadedModel download_model(const std::string& name, std::uint32_t version,
                                 const std::string& platform) const;
  TrainTicket request_training(const std::string& name, std::uint32_t version,
                               const TrainOverrides& overrides = {});
  std::vector<SessionRecord> sessions() const { return sessions_.list(); }
  void ingest_telemetry(const TelemetryRecord& r) { telemetry_.ingest(r); }
  std::vector<TelemetryRecord> list_telemetry(const TelemetryFilter& f = {}) const {
    return telemetry_.list(f);
  }

  Registry& registry() { return registry_; }
  SessionManager& session_manager() { return sessions_; }

 private:
  void install_routes();

  BackendConfig config_;
  Registry registry_;
  TelemetryStore telemetry_;
  SessionManager sessions_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  std::uint16_t http_port_ = 0;
};

// HTTP status used for an error code.
int http_status_for(Errc code);

}  // namespace crossfl
