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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "crossfl/model_package.hpp"

namespace crossfl::protocol {

// Frame layout, all integers big-endian:
//
//   u32 length      byte count of everything after this field
//   u8  tag
//   u32 header_len
//   header          UTF-8 JSON object, header_len bytes
//   body            raw bytes (encode_tensors output or empty)
//
// length == 1 + 4 + header_len + body size, and is capped at 64 MiB.
inline constexpr std::size_t kMaxFrameLength = 64u << 20;
inline constexpr std::size_t kLengthPrefix = 4;

enum class Tag : std::uint8_t {
  kJoin = 1,
  kGlobalParams = 2,
  kLocalUpdate = 3,
  kEvalRequest = 4,
  kEvalReply = 5,
  kFinish = 6,
  kAbort = 7,
};

struct JoinHeader {
  std::string client_id;
  std::string model_name;
  std::uint32_t model_version = 0;
  std::string platform;
  std::string schema_digest;
  bool operator==(const JoinHeader&) const = default;
};

struct GlobalParamsHeader {
  std::uint32_t round = 0;
  std::uint32_t epochs = 0;
  std::uint32_t batch_size = 0;
  double learning_rate = 0.0;
  bool operator==(const GlobalParamsHeader&) const = default;
};

struct LocalUpdateHeader {
  std::uint32_t round = 0;
  std::uint64_t num_examples = 0;
  double train_loss = 0.0;
  double wall_time_s = 0.0;
  bool operator==(const LocalUpdateHeader&) const = default;
};

// Body carries the aggregated parameters to evaluate.
struct EvalRequestHeader {
  std::uint32_t round = 0;
  bool operator==(const EvalRequestHeader&) const = default;
};

struct EvalReplyHeader {
  std::uint32_t round = 0;
  std::uint64_t num_examples = 0;
  double loss = 0.0;
  double metric = 0.0;
  bool operator==(const EvalReplyHeader&) const = default;
};

struct FinishHeader {
  bool operator==(const FinishHeader&) const = default;
};

struct AbortHeader {
  std::string reason;
  bool operator==(const AbortHeader&) const = default;
};

// Alternative index + 1 == Tag value.
using Header = std::variant<JoinHeader, GlobalParamsHeader, LocalUpdateHeader,
                            EvalRequestHeader, EvalReplyHeader, FinishHeader, AbortHeader>;

struct Message {
  Header header;
  Bytes body;

  Tag tag() const { return static_cast<Tag>(header.index() + 1); }
  bool operator==(const Message&) const = default;
};

// Throws kFrameTooLarge if the frame would exceed kMaxFrameLength.
Bytes encode_frame(const Message& message);

struct Decoded {
  Message message;
  std::size_t consumed = 0;  // bytes of `input` used by this frame
};

// Decodes the first frame in `input`. Throws kTruncated when `input` ends
// before the frame does, kFrameTooLarge, kUnknownTag, kHeaderParse.
Decoded decode_frame(std::span<const std::uint8_t> input);

// Decodes back-to-back frames; the input must end on a frame boundary.
std::vector<Message> decode_stream(std::span<const std::uint8_t> input);

}  // namespace crossfl::protocol
