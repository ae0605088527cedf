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

#include "crossfl/error.hpp"

namespace crossfl {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kMissingVariant: return "MissingVariant";
    case Errc::kSchemaMismatch: return "SchemaMismatch";
    case Errc::kDigestMismatch: return "DigestMismatch";
    case Errc::kUnknownName: return "UnknownName";
    case Errc::kMissingName: return "MissingName";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kPathNotFound: return "PathNotFound";
    case Errc::kEmptyUpdateList: return "EmptyUpdateList";
    case Errc::kNonFiniteValue: return "NonFiniteValue";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kUnknownTag: return "UnknownTag";
    case Errc::kTruncated: return "Truncated";
    case Errc::kFrameTooLarge: return "FrameTooLarge";
    case Errc::kHeaderParse: return "HeaderParse";
    case Errc::kPortUnavailable: return "PortUnavailable";
    case Errc::kClientSchemaMismatch: return "ClientSchemaMismatch";
    case Errc::kRoundTimeout: return "RoundTimeout";
    case Errc::kValidationFailed: return "ValidationFailed";
    case Errc::kDuplicateVersion: return "DuplicateVersion";
    case Errc::kNoModelForDataType: return "NoModelForDataType";
    case Errc::kNotFound: return "NotFound";
    case Errc::kPortRangeExhausted: return "PortRangeExhausted";
    case Errc::kMalformedRecord: return "MalformedRecord";
    case Errc::kBackendUnreachable: return "BackendUnreachable";
    case Errc::kSessionRejected: return "SessionRejected";
    case Errc::kTransportError: return "TransportError";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

std::optional<Errc> parse_errc(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::kIo); ++i) {
    const auto code = static_cast<Errc>(i);
    if (errc_name(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace crossfl
