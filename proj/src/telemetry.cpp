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

#include "crossfl/telemetry.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "crossfl/error.hpp"

namespace crossfl {

using nlohmann::json;

void validate_telemetry(const TelemetryRecord& r) {
  if (r.client_id.empty()) throw Error(Errc::kMalformedRecord, "client_id is empty");
  if (r.platform.empty()) throw Error(Errc::kMalformedRecord, "platform is empty");
  if (!std::isfinite(r.wall_time_s) || r.wall_time_s <= 0.0) {
    throw Error(Errc::kMalformedRecord, "wall_time_s must be > 0");
  }
}

std::string telemetry_to_json(const TelemetryRecord& r) {
  return json{{"client_id", r.client_id}, {"platform", r.platform},     {"device", r.device},
              {"ram", r.ram},             {"session_id", r.session_id}, {"round", r.round},
              {"wall_time_s", r.wall_time_s}}
      .dump();
}

TelemetryRecord telemetry_from_json(std::string_view text) {
  TelemetryRecord r;
  try {
    const json j = json::parse(text);
    r.client_id = j.at("client_id").get<std::string>();
    r.platform = j.at("platform").get<std::string>();
    r.device = j.value("device", "");
    r.ram = j.value("ram", "");
    r.session_id = j.value("session_id", "");
    r.round = j.value("round", 0u);
    r.wall_time_s = j.at("wall_time_s").get<double>();
  } catch (const json::exception& e) {
    throw Error(Errc::kMalformedRecord, e.what());
  }
  validate_telemetry(r);
  return r;
}

bool TelemetryFilter::matches(const TelemetryRecord& r) const {
  return (!client_id || *client_id == r.client_id) && (!platform || *platform == r.platform) &&
         (!session_id || *session_id == r.session_id);
}

TelemetryStore::TelemetryStore(std::filesystem::path path) : path_(std::move(path)) {
  std::filesystem::create_directories(path_.parent_path());
  std::ifstream in(path_, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::size_t complete = 0;  // bytes up to and including the last newline
  for (std::size_t start = 0; start < text.size();) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string::npos) break;
    complete = end + 1;
    if (end > start) {
      try {
        records_.push_back(telemetry_from_json(std::string_view(text).substr(start, end - start)));
      } catch (const Error&) {
      }
    }
    start = end + 1;
  }
  // Drop a torn tail so the next append starts on a fresh line.
  if (complete < text.size()) std::filesystem::resize_file(path_, complete);
}

void TelemetryStore::ingest(const TelemetryRecord& r) {
  validate_telemetry(r);
  const std::string line = telemetry_to_json(r) + "\n";
  std::lock_guard lock(mu_);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(Errc::kIo, "cannot open " + path_.string());
  const ssize_t n = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error(Errc::kIo, "short telemetry write");
  records_.push_back(r);
}

std::vector<TelemetryRecord> TelemetryStore::list(const TelemetryFilter& filter) const {
  std::lock_guard lock(mu_);
  std::vector<TelemetryRecord> out;
  for (const TelemetryRecord& r : records_) {
    if (filter.matches(r)) out.push_back(r);
  }
  return out;
}

}  // namespace crossfl
