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
#include <span>
#include <string>
#include <vector>

namespace crossfl::zip {

struct Entry {
  std::string name;
  std::vector<std::uint8_t> data;
};

// Stored (uncompressed) entries with a fixed 1980-01-01 timestamp, so equal
// inputs give equal bytes.
std::vector<std::uint8_t> write(const std::vector<Entry>& entries);

// Reads stored and deflated entries; verifies CRC-32. No zip64.
// Throws Error(kInvalidArgument) on malformed input.
std::vector<Entry> read(std::span<const std::uint8_t> archive);

}  // namespace crossfl::zip
