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

#include "crossfl/backend.hpp"

#include <httplib.h>

#include <json.hpp>
#include <sstream>

#include "zip_archive.hpp"

namespace crossfl {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kRevisionEntry = "revision.json";

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json session_to_json(const SessionRecord& s) {
  json j{{"session_id", s.session_id},
         {"name", s.model_name},
         {"version", s.model_version},
         {"port", s.port},
         {"status", std::string(to_string(s.status.state))},
         {"round", s.status.round},
         {"created_at_ms", s.created_at_ms}};
  if (!s.status.error.empty()) j["error"] = s.status.error;
  return j;
}

json record_summary(const ModelRecord& r) {
  return json{{"name", r.manifest.name},
              {"version", r.manifest.version},
              {"data_type", r.manifest.data_type},
              {"revision", r.revision},
              {"params_digest", r.revision_digest},
              {"uploaded_at_ms", r.uploaded_at_ms}};
}

void reply_error(httplib::Response& res, const Error& e) {
  json j{{"error", std::string(errc_name(e.code()))}, {"message", e.what()}};
  if (e.cause()) j["cause"] = std::string(errc_name(*e.cause()));
  res.status = http_status_for(e.code());
  res.set_content(j.dump(), "application/json");
}

void reply_json(httplib::Response& res, int status, const json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

std::uint32_t parse_version(const std::string& s) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used);
    if (used == s.size() && v <= 0xFFFFFFFFul) return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidArgument, "bad version '" + s + "'");
}

}  // namespace

int http_status_for(Errc code) {
  switch (code) {
    case Errc::kNotFound:
    case Errc::kNoModelForDataType: return 404;
    case Errc::kDuplicateVersion: return 409;
    case Errc::kValidationFailed:
    case Errc::kMalformedRecord:
    case Errc::kInvalidArgument: return 400;
    case Errc::kPortRangeExhausted: return 503;
    default: return 500;
  }
}

std::string architecture_summary(const Architecture& arch, LossKind loss) {
  std::ostringstream out;
  if (!arch.empty()) out << arch.front().input_dim;
  for (const LayerDesc& l : arch) out << '-' << l.output_dim;
  out << ' ';
  for (std::size_t i = 0; i < arch.size(); ++i) {
    out << (i ? "," : "") << to_string(arch[i].activation);
  }
  out << ' ' << to_string(loss);
  return out.str();
}

std::string advertisement_to_json(const ModelAdvertisement& a) {
  return json{{"name", a.name},
              {"version", a.version},
              {"data_type", a.data_type},
              {"platform", a.platform},
              {"download_path", a.download_path},
              {"schema_digest", a.schema_digest},
              {"params_digest", a.params_digest},
              {"revision", a.revision},
              {"architecture", a.architecture}}
      .dump();
}

ModelAdvertisement advertisement_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ModelAdvertisement a;
    a.name = j.at("name").get<std::string>();
    a.version = j.at("version").get<std::uint32_t>();
    a.data_type = j.at("data_type").get<std::string>();
    a.platform = j.at("platform").get<std::string>();
    a.download_path = j.at("download_path").get<std::string>();
    a.schema_digest = j.at("schema_digest").get<std::string>();
    a.params_digest = j.at("params_digest").get<std::string>();
    a.revision = j.at("revision").get<std::uint32_t>();
    a.architecture = j.at("architecture").get<std::string>();
    return a;
  } catch (const json::exception& e) {
    throw Error(Errc::kSchemaMismatch, std::string("advertisement: ") + e.what());
  }
}

Bytes encode_download(const DownloadedModel& d) {
  const std::string manifest = manifest_to_json(d.manifest);
  const std::string rev =
      json{{"platform", d.platform}, {"revision", d.revision}, {"params_digest", d.params_digest}}.dump();
  std::vector<zip::Entry> entries;
  entries.push_back({std::string(kManifestEntry), Bytes(manifest.begin(), manifest.end())});
  entries.push_back({kRevisionEntry, Bytes(rev.begin(), rev.end())});
  entries.push_back({d.platform + ".bin", d.variant});
  return zip::write(entries);
}

DownloadedModel decode_download(std::span<const std::uint8_t> bytes) {
  std::vector<zip::Entry> entries;
  try {
    entries = zip::read(bytes);
  } catch (const Error& e) {
    throw Error(Errc::kSchemaMismatch, std::string("download bundle: ") + e.what());
  }
  auto find = [&](const std::string& name) -> const Bytes& {
    for (const zip::Entry& e : entries) {
      if (e.name == name) return e.data;
    }
    throw Error(Errc::kSchemaMismatch, "download bundle lacks " + name);
  };
  DownloadedModel d;
  const Bytes& m = find(std::string(kManifestEntry));
  d.manifest = manifest_from_json(std::string_view(reinterpret_cast<const char*>(m.data()), m.size()));
  const Bytes& r = find(kRevisionEntry);
  try {
    const json j = json::parse(r.begin(), r.end());
    d.platform = j.at("platform").get<std::string>();
    d.revision = j.at("revision").get<std::uint32_t>();
    d.params_digest = j.at("params_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kSchemaMismatch, std::string("revision.json: ") + e.what());
  }
  d.variant = find(d.platform + ".bin");
  if (sha256_hex(d.variant) != d.params_digest) {
    throw Error(Errc::kDigestMismatch, "params_digest of " + d.platform + ".bin");
  }
  return d;
}

// ---------------------------------------------------------------------------

SessionManager::SessionManager(Registry& registry, const BackendConfig& config)
    : registry_(registry), config_(config), cursor_(config.port_range_begin) {
  if (config_.port_range_end < config_.port_range_begin) {
    throw Error(Errc::kInvalidArgument, "empty port range");
  }
  fs::create_directories(registry_.data_dir() / "sessions");
}

SessionManager::~SessionManager() { stop_all(); }

TrainTicket SessionManager::request_training(const std::string& name, std::uint32_t version,
                                             const TrainOverrides& overrides) {
  std::lock_guard lock(mu_);
  for (const Entry& e : sessions_) {
    if (e.record.model_name != name || e.record.model_version != version) continue;
    if (!e.server->status().terminal()) return {e.record.session_id, e.record.port, true};
  }

  const ModelRecord model = registry_.get(name, version);
  const ParameterSet initial = registry_.current_parameters(name, version);

  SessionConfig sc;
  sc.session_id = name + "-v" + std::to_string(version) + "-" + std::to_string(now_ms()) + "-" +
                  std::to_string(++counter_);
  sc.model_name = name;
  sc.model_version = version;
  sc.rounds = overrides.rounds.value_or(config_.defaults.rounds);
  sc.min_clients = overrides.min_clients.value_or(config_.defaults.min_clients);
  sc.epochs = overrides.epochs.value_or(config_.defaults.epochs);
  sc.batch_size = overrides.batch_size.value_or(config_.defaults.batch_size);
  sc.learning_rate = overrides.learning_rate.value_or(config_.defaults.learning_rate);
  sc.round_timeout = config_.defaults.round_timeout;
  sc.bind_host = config_.bind_host;
  sc.log_path = registry_.data_dir() / "sessions" / (sc.session_id + ".log");

  PersistHook persist = [this, name, version](const ParameterSet& p) {
    registry_.add_revision(name, version, p);
  };

  const std::uint32_t span = config_.port_range_end - config_.port_range_begin + 1u;
  for (std::uint32_t i = 0; i < span; ++i) {
    const auto port = static_cast<std::uint16_t>(
        config_.port_range_begin + (cursor_ - config_.port_range_begin + i) % span);
    bool live = false;
    for (const Entry& e : sessions_) {
      live = live || (e.record.port == port && !e.server->status().terminal());
    }
    if (live) continue;
    sc.port = port;
    std::shared_ptr<FlServer> server;
    try {
      server = std::make_shared<FlServer>(sc, model.manifest, initial, persist);
    } catch (const Error& e) {
      if (e.code() == Errc::kPortUnavailable) continue;
      throw;
    }
    server->start();
    cursor_ = static_cast<std::uint16_t>(
        config_.port_range_begin + (port - config_.port_range_begin + 1u) % span);
    SessionRecord rec{sc.session_id, name, version, port, server->status(), now_ms()};
    sessions_.push_back({rec, server});
    return {sc.session_id, port, false};
  }
  throw Error(Errc::kPortRangeExhausted, std::to_string(config_.port_range_begin) + "-" +
                                             std::to_string(config_.port_range_end));
}

std::vector<SessionRecord> SessionManager::list() const {
  std::lock_guard lock(mu_);
  std::vector<SessionRecord> out;
  for (const Entry& e : sessions_) {
    SessionRecord r = e.record;
    r.status = e.server->status();
    out.push_back(std::move(r));
  }
  return out;
}

std::shared_ptr<FlServer> SessionManager::find(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  for (const Entry& e : sessions_) {
    if (e.record.session_id == session_id) return e.server;
  }
  return nullptr;
}

void SessionManager::stop_all() {
  std::vector<Entry> entries;
  {
    std::lock_guard lock(mu_);
    entries = sessions_;
  }
  for (Entry& e : entries) e.server->stop();
}

// ---------------------------------------------------------------------------

Backend::Backend(BackendConfig config)
    : config_(std::move(config)),
      registry_(config_.data_dir),
      telemetry_(config_.data_dir / "telemetry.jsonl"),
      sessions_(registry_, config_) {}

Backend::~Backend() { stop(); }

std::string Backend::url() const {
  return "http://" + config_.bind_host + ":" + std::to_string(http_port_);
}

ModelRecord Backend::upload_model(std::span<const std::uint8_t> package_bytes) {
  return registry_.upload(package_bytes);
}

ModelAdvertisement Backend::advertise_model(const std::string& data_type,
                                            const std::string& platform) const {
  if (!is_platform(platform)) {
    throw Error(Errc::kInvalidArgument, "unknown platform '" + platform + "'");
  }
  const ModelRecord r = registry_.latest_for(data_type, platform);
  ModelAdvertisement a;
  a.name = r.manifest.name;
  a.version = r.manifest.version;
  a.data_type = r.manifest.data_type;
  a.platform = platform;
  a.download_path =
      "/api/models/" + r.manifest.name + "/" + std::to_string(r.manifest.version) + "/" + platform;
  a.schema_digest = schema_digest(r.manifest.schema);
  a.params_digest = r.revision_digest;
  a.revision = r.revision;
  a.architecture = architecture_summary(r.manifest.architecture, r.manifest.loss);
  return a;
}

DownloadedModel Backend::download_model(const std::string& name, std::uint32_t version,
                                        const std::string& platform) const {
  const ModelRecord r = registry_.get(name, version);
  if (r.manifest.variants.count(platform) == 0) {
    throw Error(Errc::kNotFound, name + " v" + std::to_string(version) + " has no " + platform);
  }
  DownloadedModel d;
  d.manifest = r.manifest;
  d.platform = platform;
  d.variant = encode_tensors(registry_.current_parameters(name, version));
  d.revision = r.revision;
  d.params_digest = sha256_hex(d.variant);
  return d;
}

TrainTicket Backend::request_training(const std::string& name, std::uint32_t version,
                                      const TrainOverrides& overrides) {
  return sessions_.request_training(name, version, overrides);
}

void Backend::start() {
  if (http_) return;
  http_ = std::make_unique<httplib::Server>();
  install_routes();
  if (config_.http_port == 0) {
    const int port = http_->bind_to_any_port(config_.bind_host);
    if (port <= 0) throw Error(Errc::kPortUnavailable, config_.bind_host + ":0");
    http_port_ = static_cast<std::uint16_t>(port);
  } else {
    if (!http_->bind_to_port(config_.bind_host, config_.http_port)) {
      throw Error(Errc::kPortUnavailable,
                  config_.bind_host + ":" + std::to_string(config_.http_port));
    }
    http_port_ = config_.http_port;
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void Backend::stop() {
  if (http_) {
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    http_.reset();
  }
  sessions_.stop_all();
}

void Backend::install_routes() {
  httplib::Server& s = *http_;

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const json::exception& e) {
      reply_error(res, Error(Errc::kInvalidArgument, e.what()));
    } catch (const std::exception& e) {
      reply_json(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
    }
  });

  s.Post("/api/models", [this](const httplib::Request& req, httplib::Response& res) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
    reply_json(res, 201, record_summary(upload_model(std::span(p, req.body.size()))));
  });

  s.Get("/api/models", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("data_type") && !req.has_param("platform")) {
      json models = json::array();
      for (const ModelRecord& r : registry_.list()) models.push_back(record_summary(r));
      reply_json(res, 200, json{{"models", models}});
      return;
    }
    const ModelAdvertisement a =
        advertise_model(req.get_param_value("data_type"), req.get_param_value("platform"));
    res.set_content(advertisement_to_json(a), "application/json");
  });

  s.Get(R"(/api/models/([^/]+)/([^/]+)/([^/]+))",
        [this](const httplib::Request& req, httplib::Response& res) {
          const DownloadedModel d =
              download_model(req.matches[1], parse_version(req.matches[2]), req.matches[3]);
          const Bytes body = encode_download(d);
          res.set_header("X-Revision", std::to_string(d.revision));
          res.set_header("X-Params-Digest", d.params_digest);
          res.set_content(std::string(body.begin(), body.end()), "application/zip");
        });

  s.Post("/api/train", [this](const httplib::Request& req, httplib::Response& res) {
    const json j = json::parse(req.body);
    TrainOverrides o;
    if (j.contains("rounds")) o.rounds = j.at("rounds").get<std::uint32_t>();
    if (j.contains("min_clients")) o.min_clients = j.at("min_clients").get<std::uint32_t>();
    if (j.contains("epochs")) o.epochs = j.at("epochs").get<std::uint32_t>();
    if (j.contains("batch_size")) o.batch_size = j.at("batch_size").get<std::uint32_t>();
    if (j.contains("learning_rate")) o.learning_rate = j.at("learning_rate").get<double>();
    const TrainTicket t =
        request_training(j.at("name").get<std::string>(), j.at("version").get<std::uint32_t>(), o);
    reply_json(res, 200, json{{"session_id", t.session_id}, {"port", t.port}, {"reused", t.reused}});
  });

  s.Get("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const SessionRecord& r : sessions()) list.push_back(session_to_json(r));
    reply_json(res, 200, json{{"sessions", list}});
  });

  s.Post("/api/telemetry", [this](const httplib::Request& req, httplib::Response& res) {
    ingest_telemetry(telemetry_from_json(req.body));
    reply_json(res, 201, json{{"ok", true}});
  });

  s.Get("/api/telemetry", [this](const httplib::Request& req, httplib::Response& res) {
    TelemetryFilter f;
    if (req.has_param("client_id")) f.client_id = req.get_param_value("client_id");
    if (req.has_param("platform")) f.platform = req.get_param_value("platform");
    if (req.has_param("session_id")) f.session_id = req.get_param_value("session_id");
    json list = json::array();
    for (const TelemetryRecord& r : list_telemetry(f)) list.push_back(json::parse(telemetry_to_json(r)));
    reply_json(res, 200, json{{"records", list}});
  });
}

}  // namespace crossfl
