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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crossfl/parameters.hpp"
#include "crossfl/schema.hpp"

namespace crossfl {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::string_view kIndexMapPlatform = "index_map";
inline constexpr std::string_view kLayerTreePlatform = "layer_tree";
inline constexpr std::string_view kManifestEntry = "manifest.json";

bool is_platform(std::string_view platform);

// Tensors in schema order, each element a little-endian IEEE-754 binary32,
// row-major. Length is 4 * total_elements.
Bytes encode_tensors(const ParameterSet& params);

// Throws kLengthMismatch when the byte count disagrees with the schema.
ParameterSet decode_tensors(std::span<const std::uint8_t> bytes,
                            const ParameterSchema& schema);

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

// SHA-256 of encode_tensors(params).
std::string digest_parameters(const ParameterSet& params);

struct ModelManifest {
  std::string name;
  std::uint32_t version = 0;
  std::string data_type;
  Architecture architecture;
  LossKind loss = LossKind::kMse;
  ParameterSchema schema;
  // platform -> entry name inside the package
  std::map<std::string, std::string> variants;
  std::string params_digest;
  std::string init_scheme;

  bool operator==(const ModelManifest&) const = default;
};

std::string manifest_to_json(const ModelManifest& manifest);
// Parses and validates architecture/schema consistency (kSchemaMismatch).
ModelManifest manifest_from_json(std::string_view text);

struct ModelPackage {
  ModelManifest manifest;
  // platform -> encode_tensors bytes
  std::map<std::string, Bytes> variants;

  bool operator==(const ModelPackage&) const = default;
};

// Deterministic zip (stored entries, fixed timestamps).
Bytes write_package(const ModelPackage& package);

// Validates the manifest, both variants and their digests. Throws
// kMissingVariant, kSchemaMismatch or kDigestMismatch naming the field.
ModelPackage read_package(std::span<const std::uint8_t> archive);

// Builds a consistent package around `params`: schema from the architecture,
// both variants encoded, digest filled in.
ModelPackage make_package(std::string name, std::uint32_t version,
                          std::string data_type, Architecture arch,
                          LossKind loss, const ParameterSet& params,
                          std::string init_scheme = "xavier_uniform");

// Canonical parameters carried by a package (decoded index_map variant).
ParameterSet package_parameters(const ModelPackage& package);

}  // namespace crossfl
