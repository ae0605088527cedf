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

#include "crossfl/registry.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <json.hpp>

namespace crossfl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool safe_name(const std::string& name) {
  return !name.empty() && name.size() <= 128 &&
         std::all_of(name.begin(), name.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
         }) &&
         name != "." && name != "..";
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void fsync_path(const fs::path& p, int flags) {
  const int fd = ::open(p.c_str(), flags);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::kIo, "short write to " + tmp.string());
  }
  fsync_path(tmp, O_RDONLY);
  fs::rename(tmp, path);
  fsync_path(path.parent_path(), O_RDONLY | O_DIRECTORY);
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Registry::Registry(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_);
  load_index();
}

fs::path Registry::model_dir(const std::string& name, std::uint32_t version) const {
  return fs::path("models") / name / ("v" + std::to_string(version));
}

fs::path Registry::revision_path(const std::string& name, std::uint32_t version,
                                 std::uint32_t revision) const {
  return model_dir(name, version) / ("rev_" + std::to_string(revision) + ".bin");
}

void Registry::load_index() {
  const fs::path index = data_dir_ / "index.json";
  if (!fs::exists(index)) return;
  const Bytes raw = read_file(index);
  const json j = json::parse(raw.begin(), raw.end());
  for (const json& r : j.at("models")) {
    ModelRecord rec;
    rec.package_path = r.at("package").get<std::string>();
    rec.revision = r.at("revision").get<std::uint32_t>();
    rec.revision_digest = r.at("revision_digest").get<std::string>();
    rec.uploaded_at_ms = r.at("uploaded_at_ms").get<std::int64_t>();
    rec.manifest = read_package(read_file(data_dir_ / rec.package_path)).manifest;
    records_.push_back(std::move(rec));
  }
}

void Registry::write_index() const {
  json models = json::array();
  for (const ModelRecord& r : records_) {
    models.push_back({{"name", r.manifest.name},
                      {"version", r.manifest.version},
                      {"data_type", r.manifest.data_type},
                      {"package", r.package_path.string()},
                      {"revision", r.revision},
                      {"revision_digest", r.revision_digest},
                      {"uploaded_at_ms", r.uploaded_at_ms}});
  }
  const std::string text = json{{"models", models}}.dump(2) + "\n";
  write_file_atomic(data_dir_ / "index.json",
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

const ModelRecord* Registry::find_locked(const std::string& name, std::uint32_t version) const {
  for (const ModelRecord& r : records_) {
    if (r.manifest.name == name && r.manifest.version == version) return &r;
  }
  return nullptr;
}

ModelRecord Registry::upload(std::span<const std::uint8_t> package_bytes) {
  ModelPackage pkg;
  try {
    pkg = read_package(package_bytes);
  } catch (const Error& e) {
    throw Error(Errc::kValidationFailed, e.what(), e.code());
  }
  if (!safe_name(pkg.manifest.name)) {
    throw Error(Errc::kValidationFailed, "model name '" + pkg.manifest.name + "' is not path-safe",
                Errc::kSchemaMismatch);
  }
  std::lock_guard lock(mu_);
  if (find_locked(pkg.manifest.name, pkg.manifest.version) != nullptr) {
    throw Error(Errc::kDuplicateVersion,
                pkg.manifest.name + " v" + std::to_string(pkg.manifest.version) + " already exists");
  }
  ModelRecord rec;
  rec.manifest = pkg.manifest;
  rec.package_path = model_dir(pkg.manifest.name, pkg.manifest.version) / "package.zip";
  rec.revision = 0;
  rec.revision_digest = pkg.manifest.params_digest;
  rec.uploaded_at_ms = now_ms();
  write_file_atomic(data_dir_ / rec.package_path, package_bytes);
  records_.push_back(rec);
  write_index();
  return rec;
}

std::vector<ModelRecord> Registry::list() const {
  std::lock_guard lock(mu_);
  return records_;
}

ModelRecord Registry::get(const std::string& name, std::uint32_t version) const {
  std::lock_guard lock(mu_);
  const ModelRecord* r = find_locked(name, version);
  if (r == nullptr) throw Error(Errc::kNotFound, name + " v" + std::to_string(version));
  return *r;
}

ModelRecord Registry::latest_for(const std::string& data_type, const std::string& platform) const {
  std::lock_guard lock(mu_);
  const ModelRecord* best = nullptr;
  for (const ModelRecord& r : records_) {
    if (r.manifest.data_type != data_type || r.manifest.variants.count(platform) == 0) continue;
    // Ties across model names resolve to the most recent upload.
    if (best == nullptr || r.manifest.version > best->manifest.version ||
        (r.manifest.version == best->manifest.version && r.uploaded_at_ms >= best->uploaded_at_ms)) {
      best = &r;
    }
  }
  if (best == nullptr) {
    throw Error(Errc::kNoModelForDataType, "data_type '" + data_type + "' platform '" + platform + "'");
  }
  return *best;
}

ParameterSet Registry::current_parameters(const std::string& name, std::uint32_t version) const {
  const ModelRecord rec = get(name, version);
  if (rec.revision == 0) {
    return package_parameters(read_package(read_file(data_dir_ / rec.package_path)));
  }
  return decode_tensors(read_file(data_dir_ / revision_path(name, version, rec.revision)),
                        rec.manifest.schema);
}

ModelRecord Registry::add_revision(const std::string& name, std::uint32_t version,
                                   const ParameterSet& params) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(), [&](const ModelRecord& r) {
    return r.manifest.name == name && r.manifest.version == version;
  });
  if (it == records_.end()) throw Error(Errc::kNotFound, name + " v" + std::to_string(version));
  check_conforms(params, it->manifest.schema);
  const Bytes blob = encode_tensors(params);
  const std::uint32_t next = it->revision + 1;
  write_file_atomic(data_dir_ / revision_path(name, version, next), blob);
  it->revision = next;
  it->revision_digest = sha256_hex(blob);
  write_index();
  return *it;
}

}  // namespace crossfl
