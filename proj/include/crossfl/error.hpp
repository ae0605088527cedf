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

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crossfl {

enum class Errc {
  // model_package
  kLengthMismatch,
  kMissingVariant,
  kSchemaMismatch,
  kDigestMismatch,
  // param_space
  kUnknownName,
  kMissingName,
  kShapeMismatch,
  kPathNotFound,
  kEmptyUpdateList,
  kNonFiniteValue,
  // trainer
  kDimensionMismatch,
  kEmptyDataset,
  // fl_protocol
  kUnknownTag,
  kTruncated,
  kFrameTooLarge,
  kHeaderParse,
  // fl_server
  kPortUnavailable,
  kClientSchemaMismatch,
  kRoundTimeout,
  // backend
  kValidationFailed,
  kDuplicateVersion,
  kNoModelForDataType,
  kNotFound,
  kPortRangeExhausted,
  kMalformedRecord,
  // client_runtime
  kBackendUnreachable,
  kSessionRejected,
  kTransportError,
  // general
  kInvalidArgument,
  kIo,
};

std::string_view errc_name(Errc code);
std::optional<Errc> parse_errc(std::string_view name);

// Every failure in the library surfaces as this exception. `cause` carries the
// underlying code when one error wraps another (ValidationFailed wrapping
// DigestMismatch, for instance).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<Errc> cause = std::nullopt)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        cause_(cause) {}

  Errc code() const noexcept { return code_; }
  std::optional<Errc> cause() const noexcept { return cause_; }

 private:
  Errc code_;
  std::optional<Errc> cause_;
};

}  // namespace crossfl
