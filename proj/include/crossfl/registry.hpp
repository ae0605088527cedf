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
#include <span>
#include <string>
#include <vector>

#include "crossfl/model_package.hpp"
#include "crossfl/parameters.hpp"

namespace crossfl {

struct ModelRecord {
  ModelManifest manifest;
  std::filesystem::path package_path;  // relative to the data directory
  std::uint32_t revision = 0;          // 0 = as authored
  std::string revision_digest;         // digest of the current parameters
  std::int64_t uploaded_at_ms = 0;
};

// Directory-backed model store. Packages and parameter revisions are blobs
// under models/<name>/v<version>/; index.json lists every record and is
// replaced atomically (temp file + rename) on each mutation.
class Registry {
 public:
  explicit Registry(std::filesystem::path data_dir);

  // Throws kValidationFailed (cause = the package error) or
  // kDuplicateVersion.
  ModelRecord upload(std::span<const std::uint8_t> package_bytes);

  std::vector<ModelRecord> list() const;
  // Throws kNotFound.
  ModelRecord get(const std::string& name, std::uint32_t version) const;
  // Highest version with this data type that ships `platform`. Throws
  // kNoModelForDataType.
  ModelRecord latest_for(const std::string& data_type, const std::string& platform) const;

  // Parameters of the current revision.
  ParameterSet current_parameters(const std::string& name, std::uint32_t version) const;

  // Stores `params` as revision+1 of (name, version).
  ModelRecord add_revision(const std::string& name, std::uint32_t version,
                           const ParameterSet& params);

  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  void load_index();
  void write_index() const;  // caller holds mu_
  std::filesystem::path model_dir(const std::string& name, std::uint32_t version) const;
  std::filesystem::path revision_path(const std::string& name, std::uint32_t version,
                                      std::uint32_t revision) const;
  const ModelRecord* find_locked(const std::string& name, std::uint32_t version) const;

  std::filesystem::path data_dir_;
  mutable std::mutex mu_;
  std::vector<ModelRecord> records_;
};

// Writes `bytes` to `path` via a temp file, fsync and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Bytes read_file(const std::filesystem::path& path);

}  // namespace crossfl
