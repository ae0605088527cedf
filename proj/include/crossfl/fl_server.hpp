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
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crossfl/fl_protocol.hpp"
#include "crossfl/model_package.hpp"
#include "crossfl/net.hpp"
#include "crossfl/parameters.hpp"

namespace crossfl {

struct SessionConfig {
  std::string session_id;
  std::string model_name;
  std::uint32_t model_version = 0;
  std::uint32_t rounds = 10;
  std::uint32_t min_clients = 2;
  std::uint32_t epochs = 2;
  std::uint32_t batch_size = 16;
  double learning_rate = 0.05;
  std::string bind_host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  std::chrono::milliseconds round_timeout{60000};
  // Line-delimited JSON round log; empty disables logging.
  std::filesystem::path log_path;
};

enum class SessionState { kWaiting, kRunning, kFinished, kFailed };
std::string_view to_string(SessionState s);

struct SessionStatus {
  SessionState state = SessionState::kWaiting;
  std::uint32_t round = 0;  // current round while running, last round after
  std::string error;

  bool terminal() const {
    return state == SessionState::kFinished || state == SessionState::kFailed;
  }
};

struct ClientRoundStats {
  std::string client_id;
  std::string platform;
  std::uint64_t num_examples = 0;
  double train_loss = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t eval_examples = 0;
  double eval_loss = 0.0;
  double eval_metric = 0.0;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::vector<std::string> participants;  // sorted client ids
  double aggregated_loss = 0.0;           // example-weighted mean train loss
  double eval_loss = 0.0;                 // example-weighted
  double eval_metric = 0.0;               // example-weighted
  std::string params_digest;              // of the aggregated global model
  std::vector<ClientRoundStats> clients;  // same order as participants
};

std::string round_record_to_json(const std::string& session_id, const RoundRecord& r);
RoundRecord round_record_from_json(std::string_view line);

// Receives the final global model before Finish goes out.
using PersistHook = std::function<void(const ParameterSet&)>;

// One FL training session bound to its own port. Admits min_clients clients
// whose Join matches (model name, version, schema digest), then runs
// synchronous rounds: GlobalParams -> LocalUpdate -> aggregate ->
// EvalRequest -> EvalReply. Any missing update by the round deadline, a
// disconnect or a malformed update fails the whole session.
class FlServer {
 public:
  // Binds the listening socket; throws kPortUnavailable. Initial parameters
  // must conform to the manifest schema (kSchemaMismatch).
  FlServer(SessionConfig config, const ModelManifest& manifest, ParameterSet initial,
           PersistHook persist = {});
  ~FlServer();
  FlServer(const FlServer&) = delete;
  FlServer& operator=(const FlServer&) = delete;

  void start();
  // Aborts a non-terminal session and releases the port.
  void stop();

  std::uint16_t port() const { return port_; }
  const SessionConfig& config() const { return config_; }
  SessionStatus status() const;

  // True once terminal; false on timeout.
  bool wait_for(std::chrono::milliseconds timeout) const;
  void wait() const;

  std::vector<RoundRecord> rounds() const;
  // Current global model (the final one once finished).
  ParameterSet global_parameters() const;

 private:
  struct Connection {
    std::uint64_t id = 0;
    net::Socket socket;
    std::thread reader;
    std::string client_id;  // empty until admitted
    std::string platform;
  };

  struct Event {
    std::uint64_t conn = 0;
    std::optional<protocol::Message> message;  // nullopt = disconnected
    std::string error;
    bool stop = false;
  };

  void accept_loop();
  void read_loop(std::uint64_t conn_id, net::Socket* socket);
  void control_loop();
  void push(Event e);
  std::optional<Event> pop_until(std::chrono::steady_clock::time_point deadline);
  Event pop();

  void admit_clients();
  void run_round(std::uint32_t round);
  void handle_stray(const Event& e, const char* phase);
  void send(std::uint64_t conn, const protocol::Message& m);
  void reject(std::uint64_t conn, const std::string& reason);
  void broadcast(const protocol::Message& m);
  void set_status(SessionState s, std::uint32_t round, std::string error = {});
  void log_line(const std::string& line);

  SessionConfig config_;
  ModelManifest manifest_;
  std::string schema_digest_;
  PersistHook persist_;
  net::Listener listener_;
  std::uint16_t port_ = 0;

  mutable std::mutex state_mu_;
  mutable std::condition_variable state_cv_;
  SessionStatus status_;
  ParameterSet global_;
  std::vector<RoundRecord> rounds_;

  std::mutex conn_mu_;
  std::map<std::uint64_t, std::unique_ptr<Connection>> conns_;
  std::uint64_t next_conn_ = 1;
  // Admitted connections by client id (control loop only).
  std::map<std::string, std::uint64_t> admitted_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Event> queue_;

  std::thread accept_thread_;
  std::thread control_thread_;
  bool started_ = false;
  bool stopped_ = false;
};

}  // namespace crossfl
