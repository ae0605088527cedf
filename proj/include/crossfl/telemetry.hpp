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
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace crossfl {

struct TelemetryRecord {
  std::string client_id;
  std::string platform;
  std::string device;
  std::string ram;
  std::string session_id;
  std::uint32_t round = 0;
  double wall_time_s = 0.0;  // > 0
};

std::string telemetry_to_json(const TelemetryRecord& r);
// Throws kMalformedRecord.
TelemetryRecord telemetry_from_json(std::string_view text);
void validate_telemetry(const TelemetryRecord& r);

struct TelemetryFilter {
  std::optional<std::string> client_id;
  std::optional<std::string> platform;
  std::optional<std::string> session_id;

  bool matches(const TelemetryRecord& r) const;
};

// Append-only JSON-lines log. A torn final line left by a crash is ignored
// on load.
class TelemetryStore {
 public:
  explicit TelemetryStore(std::filesystem::path path);

  void ingest(const TelemetryRecord& r);
  std::vector<TelemetryRecord> list(const TelemetryFilter& filter = {}) const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<TelemetryRecord> records_;
};

}  // namespace crossfl
