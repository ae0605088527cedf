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

#include "crossfl/backend_client.hpp"

#include <httplib.h>

#include <json.hpp>
#include <thread>

namespace crossfl {
namespace {

using nlohmann::json;

std::string query_escape(const std::string& s) { return httplib::detail::encode_query_param(s); }

ModelSummary summary_from_json(const json& j) {
  ModelSummary s;
  s.name = j.at("name").get<std::string>();
  s.version = j.at("version").get<std::uint32_t>();
  s.data_type = j.at("data_type").get<std::string>();
  s.revision = j.at("revision").get<std::uint32_t>();
  s.params_digest = j.at("params_digest").get<std::string>();
  return s;
}

}  // namespace

SessionState parse_session_state(std::string_view s) {
  for (SessionState st : {SessionState::kWaiting, SessionState::kRunning, SessionState::kFinished,
                          SessionState::kFailed}) {
    if (to_string(st) == s) return st;
  }
  throw Error(Errc::kInvalidArgument, "unknown session state '" + std::string(s) + "'");
}

BackendClient::BackendClient(std::string url, RetryPolicy policy) : policy_(policy) {
  std::string rest = url;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) {
    host_ = rest;
    port_ = 80;
  } else {
    host_ = rest.substr(0, colon);
    try {
      port_ = static_cast<std::uint16_t>(std::stoul(rest.substr(colon + 1)));
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidArgument, "bad backend url '" + url + "'");
    }
  }
  if (host_.empty()) throw Error(Errc::kInvalidArgument, "bad backend url '" + url + "'");
}

template <typename F>
BackendClient::Reply BackendClient::with_retries(F&& f) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(policy_.connect_timeout);
  cli.set_read_timeout(policy_.read_timeout);
  cli.set_write_timeout(policy_.read_timeout);
  auto backoff = policy_.initial_backoff;
  last_attempts_ = 0;
  std::string last_error;
  for (std::uint32_t attempt = 0; attempt <= policy_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    ++last_attempts_;
    httplib::Result res = f(cli);
    if (res) {
      Reply r{res->status, res->body};
      if (r.status >= 400) {
        Errc code = Errc::kTransportError;
        std::string message = "HTTP " + std::to_string(r.status);
        std::optional<Errc> cause;
        try {
          const json j = json::parse(r.body);
          if (auto c = parse_errc(j.value("error", ""))) code = *c;
          message = j.value("message", message);
          if (j.contains("cause")) cause = parse_errc(j.at("cause").get<std::string>());
        } catch (const json::exception&) {
        }
        // The server's message already carries the code prefix.
        const std::string prefix = std::string(errc_name(code)) + ": ";
        if (message.rfind(prefix, 0) == 0) message = message.substr(prefix.size());
        throw Error(code, message, cause);
      }
      return r;
    }
    last_error = httplib::to_string(res.error());
  }
  throw Error(Errc::kBackendUnreachable, host_ + ":" + std::to_string(port_) + " (" + last_error +
                                             ", " + std::to_string(last_attempts_) + " attempts)");
}

BackendClient::Reply BackendClient::get(const std::string& path) {
  return with_retries([&](httplib::Client& c) { return c.Get(path); });
}

BackendClient::Reply BackendClient::post(const std::string& path, const std::string& body,
                                         const std::string& content_type) {
  return with_retries([&](httplib::Client& c) { return c.Post(path, body, content_type); });
}

ModelSummary BackendClient::upload(std::span<const std::uint8_t> package_bytes) {
  const Reply r = post("/api/models",
                       std::string(reinterpret_cast<const char*>(package_bytes.data()), package_bytes.size()),
                       "application/zip");
  return summary_from_json(json::parse(r.body));
}

std::vector<ModelSummary> BackendClient::list_models() {
  const json j = json::parse(get("/api/models").body);
  std::vector<ModelSummary> out;
  for (const json& m : j.at("models")) out.push_back(summary_from_json(m));
  return out;
}

ModelAdvertisement BackendClient::advertise(const std::string& data_type, const std::string& platform) {
  return advertisement_from_json(
      get("/api/models?data_type=" + query_escape(data_type) + "&platform=" + query_escape(platform))
          .body);
}

DownloadedModel BackendClient::download(const std::string& name, std::uint32_t version,
                                        const std::string& platform) {
  const Reply r = get("/api/models/" + query_escape(name) + "/" + std::to_string(version) + "/" +
                      query_escape(platform));
  return decode_download(std::span(reinterpret_cast<const std::uint8_t*>(r.body.data()), r.body.size()));
}

TrainTicket BackendClient::request_training(const std::string& name, std::uint32_t version,
                                            const TrainOverrides& o) {
  json req{{"name", name}, {"version", version}};
  if (o.rounds) req["rounds"] = *o.rounds;
  if (o.min_clients) req["min_clients"] = *o.min_clients;
  if (o.epochs) req["epochs"] = *o.epochs;
  if (o.batch_size) req["batch_size"] = *o.batch_size;
  if (o.learning_rate) req["learning_rate"] = *o.learning_rate;
  const json j = json::parse(post("/api/train", req.dump(), "application/json").body);
  return {j.at("session_id").get<std::string>(), j.at("port").get<std::uint16_t>(),
          j.at("reused").get<bool>()};
}

std::vector<SessionRecord> BackendClient::sessions() {
  const json j = json::parse(get("/api/sessions").body);
  std::vector<SessionRecord> out;
  for (const json& s : j.at("sessions")) {
    SessionRecord r;
    r.session_id = s.at("session_id").get<std::string>();
    r.model_name = s.at("name").get<std::string>();
    r.model_version = s.at("version").get<std::uint32_t>();
    r.port = s.at("port").get<std::uint16_t>();
    r.status.state = parse_session_state(s.at("status").get<std::string>());
    r.status.round = s.at("round").get<std::uint32_t>();
    r.status.error = s.value("error", "");
    r.created_at_ms = s.at("created_at_ms").get<std::int64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

void BackendClient::post_telemetry(const TelemetryRecord& r) {
  post("/api/telemetry", telemetry_to_json(r), "application/json");
}

std::vector<TelemetryRecord> BackendClient::telemetry(const TelemetryFilter& f) {
  std::string q;
  auto add = [&](const char* key, const std::optional<std::string>& v) {
    if (!v) return;
    q += (q.empty() ? "?" : "&") + std::string(key) + "=" + query_escape(*v);
  };
  add("client_id", f.client_id);
  add("platform", f.platform);
  add("session_id", f.session_id);
  const json j = json::parse(get("/api/telemetry" + q).body);
  std::vector<TelemetryRecord> out;
  for (const json& r : j.at("records")) out.push_back(telemetry_from_json(r.dump()));
  return out;
}

}  // namespace crossfl
