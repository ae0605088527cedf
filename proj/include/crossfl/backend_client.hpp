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
#include <span>
#include <string>
#include <vector>

#include "crossfl/backend.hpp"
#include "crossfl/telemetry.hpp"

namespace crossfl {

struct RetryPolicy {
  std::uint32_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};  // doubled per retry
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{30000};
};

struct ModelSummary {
  std::string name;
  std::uint32_t version = 0;
  std::string data_type;
  std::uint32_t revision = 0;
  std::string params_digest;
};

// HTTP client for the backend API. A request that cannot reach the server is
// retried up to max_retries times with exponential backoff, then fails with
// kBackendUnreachable. Error replies are rethrown with the server's code.
class BackendClient {
 public:
  explicit BackendClient(std::string url, RetryPolicy policy = {});

  const std::string& host() const { return host_; }
  std::uint16_t port() const { return port_; }

  ModelSummary upload(std::span<const std::uint8_t> package_bytes);
  std::vector<ModelSummary> list_models();
  ModelAdvertisement advertise(const std::string& data_type, const std::string& platform);
  DownloadedModel download(const std::string& name, std::uint32_t version,
                           const std::string& platform);
  TrainTicket request_training(const std::string& name, std::uint32_t version,
                               const TrainOverrides& overrides = {});
  std::vector<SessionRecord> sessions();
  void post_telemetry(const TelemetryRecord& r);
  std::vector<TelemetryRecord> telemetry(const TelemetryFilter& filter = {});

  // Connection attempts made by the most recent request.
  std::uint32_t last_attempts() const { return last_attempts_; }

 private:
  struct Reply {
    int status = 0;
    std::string body;
  };
  Reply get(const std::string& path);
  Reply post(const std::string& path, const std::string& body, const std::string& content_type);
  template <typename F>
  Reply with_retries(F&& f);

  std::string host_;
  std::uint16_t port_ = 0;
  RetryPolicy policy_;
  std::uint32_t last_attempts_ = 0;
};

SessionState parse_session_state(std::string_view s);

}  // namespace crossfl
