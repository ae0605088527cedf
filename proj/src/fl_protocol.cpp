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

#include "crossfl/fl_protocol.hpp"

#include <json.hpp>

namespace crossfl::protocol {
namespace {

using nlohmann::json;

void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (static_cast<std::uint32_t>(in[at]) << 24) | (static_cast<std::uint32_t>(in[at + 1]) << 16) |
         (static_cast<std::uint32_t>(in[at + 2]) << 8) | static_cast<std::uint32_t>(in[at + 3]);
}

struct ToJson {
  json operator()(const JoinHeader& h) const {
    return {{"client_id", h.client_id},
            {"model_name", h.model_name},
            {"model_version", h.model_version},
            {"platform", h.platform},
            {"schema_digest", h.schema_digest}};
  }
  json operator()(const GlobalParamsHeader& h) const {
    return {{"round", h.round},
            {"epochs", h.epochs},
            {"batch_size", h.batch_size},
            {"learning_rate", h.learning_rate}};
  }
  json operator()(const LocalUpdateHeader& h) const {
    return {{"round", h.round},
            {"num_examples", h.num_examples},
            {"train_loss", h.train_loss},
            {"wall_time_s", h.wall_time_s}};
  }
  json operator()(const EvalRequestHeader& h) const { return {{"round", h.round}}; }
  json operator()(const EvalReplyHeader& h) const {
    return {{"round", h.round}, {"num_examples", h.num_examples}, {"loss", h.loss}, {"metric", h.metric}};
  }
  json operator()(const FinishHeader&) const { return json::object(); }
  json operator()(const AbortHeader& h) const { return {{"reason", h.reason}}; }
};

Header header_from_json(Tag tag, const json& j) {
  switch (tag) {
    case Tag::kJoin:
      return JoinHeader{j.at("client_id").get<std::string>(), j.at("model_name").get<std::string>(),
                        j.at("model_version").get<std::uint32_t>(),
                        j.at("platform").get<std::string>(), j.at("schema_digest").get<std::string>()};
    case Tag::kGlobalParams:
      return GlobalParamsHeader{j.at("round").get<std::uint32_t>(), j.at("epochs").get<std::uint32_t>(),
                                j.at("batch_size").get<std::uint32_t>(),
                                j.at("learning_rate").get<double>()};
    case Tag::kLocalUpdate:
      return LocalUpdateHeader{j.at("round").get<std::uint32_t>(),
                               j.at("num_examples").get<std::uint64_t>(),
                               j.at("train_loss").get<double>(), j.at("wall_time_s").get<double>()};
    case Tag::kEvalRequest:
      return EvalRequestHeader{j.at("round").get<std::uint32_t>()};
    case Tag::kEvalReply:
      return EvalReplyHeader{j.at("round").get<std::uint32_t>(), j.at("num_examples").get<std::uint64_t>(),
                             j.at("loss").get<double>(), j.at("metric").get<double>()};
    case Tag::kFinish:
      return FinishHeader{};
    case Tag::kAbort:
      return AbortHeader{j.at("reason").get<std::string>()};
  }
  throw Error(Errc::kUnknownTag, "tag " + std::to_string(static_cast<int>(tag)));
}

}  // namespace

Bytes encode_frame(const Message& message) {
  const std::string header = std::visit(ToJson{}, message.header).dump();
  const std::size_t length = 1 + 4 + header.size() + message.body.size();
  if (length > kMaxFrameLength) {
    throw Error(Errc::kFrameTooLarge, std::to_string(length) + " byte frame");
  }
  Bytes out;
  out.reserve(kLengthPrefix + length);
  put_u32(out, static_cast<std::uint32_t>(length));
  out.push_back(static_cast<std::uint8_t>(message.tag()));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), message.body.begin(), message.body.end());
  return out;
}

Decoded decode_frame(std::span<const std::uint8_t> input) {
  if (input.size() < kLengthPrefix) throw Error(Errc::kTruncated, "length prefix incomplete");
  const std::uint32_t length = get_u32(input, 0);
  if (length > kMaxFrameLength) {
    throw Error(Errc::kFrameTooLarge, std::to_string(length) + " byte frame");
  }
  if (input.size() - kLengthPrefix < length) {
    throw Error(Errc::kTruncated, "frame needs " + std::to_string(length) + " bytes, have " +
                                      std::to_string(input.size() - kLengthPrefix));
  }
  if (length < 5) throw Error(Errc::kHeaderParse, "frame too short for tag and header length");
  const std::uint8_t raw_tag = input[4];
  if (raw_tag < 1 || raw_tag > 7) {
    throw Error(Errc::kUnknownTag, "tag " + std::to_string(static_cast<int>(raw_tag)));
  }
  const std::uint32_t header_len = get_u32(input, 5);
  if (header_len > length - 5) throw Error(Errc::kHeaderParse, "header_len exceeds frame");

  const auto header_bytes = input.subspan(9, header_len);
  Decoded out;
  try {
    const json j = json::parse(header_bytes.begin(), header_bytes.end());
    if (!j.is_object()) throw Error(Errc::kHeaderParse, "header is not an object");
    out.message.header = header_from_json(static_cast<Tag>(raw_tag), j);
  } catch (const json::exception& e) {
    throw Error(Errc::kHeaderParse, e.what());
  }
  const auto body = input.subspan(9 + header_len, length - 5 - header_len);
  out.message.body.assign(body.begin(), body.end());
  out.consumed = kLengthPrefix + length;
  return out;
}

std::vector<Message> decode_stream(std::span<const std::uint8_t> input) {
  std::vector<Message> messages;
  while (!input.empty()) {
    Decoded d = decode_frame(input);
    messages.push_back(std::move(d.message));
    input = input.subspan(d.consumed);
  }
  return messages;
}

}  // namespace crossfl::protocol
