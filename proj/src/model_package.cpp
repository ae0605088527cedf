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

#include "crossfl/model_package.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <limits>
#include <json.hpp>

#include "zip_archive.hpp"

namespace crossfl {
namespace {

using nlohmann::json;

static_assert(std::numeric_limits<float>::is_iec559);

std::uint32_t float_bits(float v) { return std::bit_cast<std::uint32_t>(v); }

json tensor_spec_json(const TensorSpec& t) {
  return json{{"name", t.name},
              {"shape", t.shape},
              {"role", std::string(to_string(t.role))},
              {"layer_path", t.layer_path},
              {"updatable", t.updatable}};
}

TensorSpec tensor_spec_from(const json& j) {
  TensorSpec t;
  t.name = j.at("name").get<std::string>();
  t.shape = j.at("shape").get<std::vector<std::uint32_t>>();
  t.role = parse_role(j.at("role").get<std::string>());
  t.layer_path = j.at("layer_path").get<std::vector<std::string>>();
  t.updatable = j.at("updatable").get<bool>();
  return t;
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

bool is_platform(std::string_view platform) {
  return platform == kIndexMapPlatform || platform == kLayerTreePlatform;
}

Bytes encode_tensors(const ParameterSet& params) {
  Bytes out;
  out.reserve(4 * params.total_elements());
  for (const Tensor& t : params.tensors) {
    for (float v : t.values) {
      const std::uint32_t bits = float_bits(v);
      out.push_back(static_cast<std::uint8_t>(bits));
      out.push_back(static_cast<std::uint8_t>(bits >> 8));
      out.push_back(static_cast<std::uint8_t>(bits >> 16));
      out.push_back(static_cast<std::uint8_t>(bits >> 24));
    }
  }
  return out;
}

ParameterSet decode_tensors(std::span<const std::uint8_t> bytes,
                            const ParameterSchema& schema) {
  const std::size_t expected = 4 * schema.total_elements();
  if (bytes.size() != expected) {
    throw Error(Errc::kLengthMismatch, "got " + std::to_string(bytes.size()) +
                                           " bytes, schema needs " + std::to_string(expected));
  }
  ParameterSet p;
  p.tensors.reserve(schema.tensors.size());
  std::size_t at = 0;
  for (const TensorSpec& spec : schema.tensors) {
    Tensor t{spec.shape, std::vector<float>(spec.element_count())};
    for (float& v : t.values) {
      const std::uint32_t bits = static_cast<std::uint32_t>(bytes[at]) |
                                 (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[at + 2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
      v = std::bit_cast<float>(bits);
      at += 4;
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIo, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

std::string sha256_hex(std::string_view bytes) { return sha256_hex(as_bytes(bytes)); }

std::string digest_parameters(const ParameterSet& params) {
  return sha256_hex(encode_tensors(params));
}

std::string manifest_to_json(const ModelManifest& m) {
  json arch = json::array();
  for (const LayerDesc& l : m.architecture) {
    arch.push_back({{"input_dim", l.input_dim},
                    {"output_dim", l.output_dim},
                    {"activation", std::string(to_string(l.activation))}});
  }
  json tensors = json::array();
  for (const TensorSpec& t : m.schema.tensors) tensors.push_back(tensor_spec_json(t));
  json j{{"name", m.name},
         {"version", m.version},
         {"data_type", m.data_type},
         {"architecture", arch},
         {"loss", std::string(to_string(m.loss))},
         {"schema", {{"tensors", tensors}, {"total_elements", m.schema.total_elements()}}},
         {"variants", m.variants},
         {"params_digest", m.params_digest},
         {"init_scheme", m.init_scheme}};
  return j.dump(2) + "\n";
}

ModelManifest manifest_from_json(std::string_view text) {
  ModelManifest m;
  try {
    const json j = json::parse(text);
    m.name = j.at("name").get<std::string>();
    m.version = j.at("version").get<std::uint32_t>();
    m.data_type = j.at("data_type").get<std::string>();
    for (const json& l : j.at("architecture")) {
      m.architecture.push_back(LayerDesc{l.at("input_dim").get<std::uint32_t>(),
                                         l.at("output_dim").get<std::uint32_t>(),
                                         parse_activation(l.at("activation").get<std::string>())});
    }
    m.loss = parse_loss(j.at("loss").get<std::string>());
    for (const json& t : j.at("schema").at("tensors")) {
      m.schema.tensors.push_back(tensor_spec_from(t));
    }
    if (j.at("schema").contains("total_elements") &&
        j.at("schema").at("total_elements").get<std::size_t>() != m.schema.total_elements()) {
      throw Error(Errc::kSchemaMismatch, "schema.total_elements disagrees with tensor shapes");
    }
    m.variants = j.at("variants").get<std::map<std::string, std::string>>();
    m.params_digest = j.at("params_digest").get<std::string>();
    m.init_scheme = j.value("init_scheme", "");
  } catch (const json::exception& e) {
    throw Error(Errc::kSchemaMismatch, std::string("manifest: ") + e.what());
  }
  if (m.name.empty()) throw Error(Errc::kSchemaMismatch, "manifest.name is empty");
  if (m.version < 1) throw Error(Errc::kSchemaMismatch, "manifest.version must be >= 1");
  if (m.data_type.empty()) throw Error(Errc::kSchemaMismatch, "manifest.data_type is empty");
  validate_architecture(m.architecture, m.loss);
  m.schema.validate();
  check_schema_matches(m.schema, m.architecture);
  return m;
}

Bytes write_package(const ModelPackage& package) {
  std::vector<zip::Entry> entries;
  const std::string manifest = manifest_to_json(package.manifest);
  entries.push_back({std::string(kManifestEntry), Bytes(manifest.begin(), manifest.end())});
  for (const auto& [platform, entry_name] : package.manifest.variants) {
    const auto it = package.variants.find(platform);
    if (it == package.variants.end()) {
      throw Error(Errc::kMissingVariant, "variants." + platform);
    }
    entries.push_back({entry_name, it->second});
  }
  return zip::write(entries);
}

ModelPackage read_package(std::span<const std::uint8_t> archive) {
  const std::vector<zip::Entry> entries = zip::read(archive);
  auto find = [&](std::string_view name) -> const zip::Entry* {
    for (const zip::Entry& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };

  const zip::Entry* manifest_entry = find(kManifestEntry);
  if (manifest_entry == nullptr) {
    throw Error(Errc::kSchemaMismatch, std::string(kManifestEntry) + " is missing");
  }
  ModelPackage pkg;
  pkg.manifest = manifest_from_json(std::string_view(
      reinterpret_cast<const char*>(manifest_entry->data.data()), manifest_entry->data.size()));

  for (std::string_view platform : {kIndexMapPlatform, kLayerTreePlatform}) {
    const std::string field = "variants." + std::string(platform);
    const auto it = pkg.manifest.variants.find(std::string(platform));
    if (it == pkg.manifest.variants.end()) throw Error(Errc::kMissingVariant, field);
    const zip::Entry* blob = find(it->second);
    if (blob == nullptr) {
      throw Error(Errc::kMissingVariant, field + " names absent entry '" + it->second + "'");
    }
    ParameterSet params;
    try {
      params = decode_tensors(blob->data, pkg.manifest.schema);
    } catch (const Error& e) {
      throw Error(Errc::kSchemaMismatch, field + ": " + e.what(), e.code());
    }
    if (!all_finite(params)) throw Error(Errc::kNonFiniteValue, field + " holds NaN/Inf");
    const std::string digest = digest_parameters(params);
    if (digest != pkg.manifest.params_digest) {
      throw Error(Errc::kDigestMismatch,
                  field + " digest " + digest + " != params_digest " + pkg.manifest.params_digest);
    }
    pkg.variants.emplace(std::string(platform), blob->data);
  }
  return pkg;
}

ModelPackage make_package(std::string name, std::uint32_t version, std::string data_type,
                          Architecture arch, LossKind loss, const ParameterSet& params,
                          std::string init_scheme) {
  validate_architecture(arch, loss);
  ModelPackage pkg;
  ModelManifest& m = pkg.manifest;
  m.name = std::move(name);
  m.version = version;
  m.data_type = std::move(data_type);
  m.schema = schema_for_architecture(arch);
  m.architecture = std::move(arch);
  m.loss = loss;
  m.init_scheme = std::move(init_scheme);
  check_conforms(params, m.schema);
  const Bytes blob = encode_tensors(params);
  m.params_digest = sha256_hex(blob);
  for (std::string_view platform : {kIndexMapPlatform, kLayerTreePlatform}) {
    m.variants.emplace(std::string(platform), std::string(platform) + ".bin");
    pkg.variants.emplace(std::string(platform), blob);
  }
  return pkg;
}

ParameterSet package_parameters(const ModelPackage& package) {
  return decode_tensors(package.variants.at(std::string(kIndexMapPlatform)),
                        package.manifest.schema);
}

}  // namespace crossfl
