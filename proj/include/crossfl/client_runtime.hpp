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

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossfl/backend_client.hpp"
#include "crossfl/error.hpp"
#include "crossfl/param_space.hpp"
#include "crossfl/trainer.hpp"

namespace crossfl {

struct ClientProfile {
  std::string client_id;
  std::string platform = "index_map";
  double speed_factor = 1.0;  // > 0; 1.0 adds no delay
  std::string device;
  std::string ram;
  std::uint64_t seed = 0;
  // When false the client trains on canonical parameters directly and skips
  // the platform layout round trip.
  bool emulate_layout = true;
};

void validate_profile(const ClientProfile& p);

// Emulated device slowdown. After each training step taking c CPU seconds,
// (speed_factor - 1) * c seconds of real delay are owed; debt above ~1 ms is
// paid by sleeping and the last stretch by spinning, and the time actually
// waited is what gets counted.
class SpeedPacer {
 public:
  explicit SpeedPacer(double speed_factor);

  void on_step(double step_cpu_seconds);
  // Pays any remaining positive debt.
  void flush();
  // Starts a new round; keeps any credit from overpaid delay.
  void reset();

  double compute_s() const { return compute_s_; }
  double injected_s() const { return injected_s_; }
  // CPU time of the steps plus the delay actually waited.
  double device_time_s() const { return compute_s_ + injected_s_; }

 private:
  void pay(double seconds);

  double speed_factor_;
  double debt_s_ = 0.0;
  double compute_s_ = 0.0;
  double injected_s_ = 0.0;
};

struct ClientRoundLog {
  std::uint32_t round = 0;
  double train_loss = 0.0;  // final local epoch
  double eval_loss = 0.0;
  double eval_metric = 0.0;
  double wall_time_s = 0.0;  // reported device time
  double elapsed_s = 0.0;    // steady-clock span of local training
};

enum class ClientStatus { kFinished, kFailed };

struct ClientReport {
  std::string client_id;
  std::string platform;
  std::string model_name;
  std::uint32_t model_version = 0;
  std::string session_id;
  std::uint16_t port = 0;
  std::vector<ClientRoundLog> rounds;
  std::uint32_t telemetry_posted = 0;
  LayoutAccessCounts layout_counts;
  ClientStatus status = ClientStatus::kFailed;
  std::string error;
  std::optional<Errc> error_code;

  bool ok() const { return status == ClientStatus::kFinished; }
};

struct ClientOptions {
  RetryPolicy retry;
  TrainOverrides train;  // forwarded to request_training
};

// Model Request -> FL Server Setup -> FL Training. Failures before the
// session starts throw (kBackendUnreachable, kNoModelForDataType,
// kSessionRejected, ...). A broken session returns a partial report with
// status failed.
ClientReport run_client(const ClientProfile& profile, const std::string& backend_url,
                        const std::string& data_type, const Dataset& shard,
                        const ClientOptions& options = {});

// Seed for local training in `round`.
std::uint64_t round_seed(std::uint64_t client_seed, std::uint32_t round);

}  // namespace crossfl
