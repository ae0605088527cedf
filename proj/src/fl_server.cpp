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

#include "crossfl/fl_server.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <json.hpp>

#include "crossfl/param_space.hpp"

namespace crossfl {
namespace {

using nlohmann::json;
using protocol::Message;

// Unwinds the control loop; the message becomes the session error.
struct SessionFailure {
  std::string reason;
};

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::kWaiting: return "waiting";
    case SessionState::kRunning: return "running";
    case SessionState::kFinished: return "finished";
    case SessionState::kFailed: return "failed";
  }
  return "?";
}

std::string round_record_to_json(const std::string& session_id, const RoundRecord& r) {
  json clients = json::array();
  for (const ClientRoundStats& c : r.clients) {
    clients.push_back({{"client_id", c.client_id},
                       {"platform", c.platform},
                       {"num_examples", c.num_examples},
                       {"train_loss", c.train_loss},
                       {"wall_time_s", c.wall_time_s},
                       {"eval_examples", c.eval_examples},
                       {"eval_loss", c.eval_loss},
                       {"eval_metric", c.eval_metric}});
  }
  const json j{{"event", "round"},
               {"session_id", session_id},
               {"round", r.round},
               {"participants", r.participants},
               {"aggregated_loss", r.aggregated_loss},
               {"eval_loss", r.eval_loss},
               {"eval_metric", r.eval_metric},
               {"params_digest", r.params_digest},
               {"clients", clients}};
  return j.dump();
}

RoundRecord round_record_from_json(std::string_view line) {
  const json j = json::parse(line);
  RoundRecord r;
  r.round = j.at("round").get<std::uint32_t>();
  r.participants = j.at("participants").get<std::vector<std::string>>();
  r.aggregated_loss = j.at("aggregated_loss").get<double>();
  r.eval_loss = j.at("eval_loss").get<double>();
  r.eval_metric = j.at("eval_metric").get<double>();
  r.params_digest = j.at("params_digest").get<std::string>();
  for (const json& c : j.at("clients")) {
    r.clients.push_back(ClientRoundStats{
        c.at("client_id").get<std::string>(), c.at("platform").get<std::string>(),
        c.at("num_examples").get<std::uint64_t>(), c.at("train_loss").get<double>(),
        c.at("wall_time_s").get<double>(), c.at("eval_examples").get<std::uint64_t>(),
        c.at("eval_loss").get<double>(), c.at("eval_metric").get<double>()});
  }
  return r;
}

FlServer::FlServer(SessionConfig config, const ModelManifest& manifest, ParameterSet initial,
                   PersistHook persist)
    : config_(std::move(config)),
      manifest_(manifest),
      schema_digest_(schema_digest(manifest.schema)),
      persist_(std::move(persist)),
      listener_(config_.bind_host, config_.port),
      port_(listener_.port()) {
  check_conforms(initial, manifest_.schema);
  if (config_.rounds < 1) throw Error(Errc::kInvalidArgument, "rounds must be >= 1");
  if (config_.min_clients < 1) throw Error(Errc::kInvalidArgument, "min_clients must be >= 1");
  global_ = std::move(initial);
}

FlServer::~FlServer() {
  stop();
  // The control loop joins the accept thread on its way out.
  if (control_thread_.joinable()) control_thread_.join();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard lock(conn_mu_);
  for (auto& [id, conn] : conns_) {
    conn->socket.shutdown();
    if (conn->reader.joinable()) conn->reader.join();
  }
}

void FlServer::start() {
  if (started_) return;
  started_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  control_thread_ = std::thread([this] { control_loop(); });
}

void FlServer::stop() {
  {
    std::lock_guard lock(state_mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  push(Event{0, std::nullopt, {}, true});
  listener_.shutdown();
  if (!started_) set_status(SessionState::kFailed, 0, "stopped before start");
}

SessionStatus FlServer::status() const {
  std::lock_guard lock(state_mu_);
  return status_;
}

bool FlServer::wait_for(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(state_mu_);
  return state_cv_.wait_for(lock, timeout, [this] { return status_.terminal(); });
}

void FlServer::wait() const {
  std::unique_lock lock(state_mu_);
  state_cv_.wait(lock, [this] { return status_.terminal(); });
}

std::vector<RoundRecord> FlServer::rounds() const {
  std::lock_guard lock(state_mu_);
  return rounds_;
}

ParameterSet FlServer::global_parameters() const {
  std::lock_guard lock(state_mu_);
  return global_;
}

void FlServer::set_status(SessionState s, std::uint32_t round, std::string error) {
  {
    std::lock_guard lock(state_mu_);
    if (status_.terminal()) return;
    status_.state = s;
    status_.round = round;
    status_.error = std::move(error);
  }
  state_cv_.notify_all();
}

void FlServer::log_line(const std::string& line) {
  if (config_.log_path.empty()) return;
  std::ofstream out(config_.log_path, std::ios::app);
  out << line << '\n';
}

void FlServer::accept_loop() {
  for (;;) {
    net::Socket s = listener_.accept();
    if (!s.valid()) return;
    std::lock_guard lock(conn_mu_);
    {
      std::lock_guard state_lock(state_mu_);
      if (stopped_) return;
    }
    auto conn = std::make_unique<Connection>();
    conn->id = next_conn_++;
    conn->socket = std::move(s);
    Connection* raw = conn.get();
    conns_.emplace(raw->id, std::move(conn));
    raw->reader = std::thread([this, raw] { read_loop(raw->id, &raw->socket); });
  }
}

void FlServer::read_loop(std::uint64_t conn_id, net::Socket* socket) {
  try {
    while (auto m = net::read_message(*socket)) {
      push(Event{conn_id, std::move(*m), {}, false});
    }
    push(Event{conn_id, std::nullopt, "connection closed", false});
  } catch (const std::exception& e) {
    push(Event{conn_id, std::nullopt, e.what(), false});
  }
}

void FlServer::push(Event e) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(e));
  }
  queue_cv_.notify_one();
}

std::optional<FlServer::Event> FlServer::pop_until(std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(queue_mu_);
  if (!queue_cv_.wait_until(lock, deadline, [this] { return !queue_.empty(); })) {
    return std::nullopt;
  }
  Event e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

FlServer::Event FlServer::pop() {
  std::unique_lock lock(queue_mu_);
  queue_cv_.wait(lock, [this] { return !queue_.empty(); });
  Event e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

void FlServer::send(std::uint64_t conn, const Message& m) {
  net::Socket* socket = nullptr;
  {
    std::lock_guard lock(conn_mu_);
    const auto it = conns_.find(conn);
    if (it == conns_.end()) return;
    socket = &it->second->socket;
  }
  socket->send_all(protocol::encode_frame(m));
}

void FlServer::reject(std::uint64_t conn, const std::string& reason) {
  try {
    send(conn, Message{protocol::AbortHeader{reason}, {}});
  } catch (const Error&) {
    // already gone
  }
  std::lock_guard lock(conn_mu_);
  const auto it = conns_.find(conn);
  if (it != conns_.end()) it->second->socket.shutdown();
}

void FlServer::broadcast(const Message& m) {
  for (const auto& [client_id, conn] : admitted_) {
    try {
      send(conn, m);
    } catch (const Error& e) {
      throw SessionFailure{"sending to " + client_id + ": " + e.what()};
    }
  }
}

void FlServer::handle_stray(const Event& e, const char* phase) {
  if (e.stop) throw SessionFailure{"session stopped"};
  const bool is_admitted = std::any_of(admitted_.begin(), admitted_.end(),
                                       [&](const auto& kv) { return kv.second == e.conn; });
  if (!is_admitted) {
    if (e.message && e.message->tag() == protocol::Tag::kJoin) {
      reject(e.conn, "session already running; late joiners are not admitted");
    }
    return;
  }
  if (!e.message) throw SessionFailure{"client disconnected during " + std::string(phase) + ": " + e.error};
  throw SessionFailure{"unexpected message tag " +
                       std::to_string(static_cast<int>(e.message->tag())) + " during " + phase};
}

void FlServer::admit_clients() {
  while (admitted_.size() < config_.min_clients) {
    Event e = pop();
    if (e.stop) throw SessionFailure{"session stopped"};
    if (!e.message) {
      for (auto it = admitted_.begin(); it != admitted_.end(); ++it) {
        if (it->second == e.conn) {
          admitted_.erase(it);
          break;
        }
      }
      continue;
    }
    const auto* join = std::get_if<protocol::JoinHeader>(&e.message->header);
    if (join == nullptr) {
      reject(e.conn, "expected Join");
      continue;
    }
    if (join->model_name != config_.model_name || join->model_version != config_.model_version) {
      reject(e.conn, "session trains " + config_.model_name + " v" +
                         std::to_string(config_.model_version));
      continue;
    }
    if (join->schema_digest != schema_digest_) {
      reject(e.conn, std::string(errc_name(Errc::kClientSchemaMismatch)) + ": schema digest mismatch");
      continue;
    }
    if (!is_platform(join->platform)) {
      reject(e.conn, "unknown platform '" + join->platform + "'");
      continue;
    }
    if (join->client_id.empty() || admitted_.count(join->client_id) != 0) {
      reject(e.conn, "client id missing or already admitted");
      continue;
    }
    admitted_.emplace(join->client_id, e.conn);
    std::lock_guard lock(conn_mu_);
    Connection& c = *conns_.at(e.conn);
    c.client_id = join->client_id;
    c.platform = join->platform;
  }
}

void FlServer::run_round(std::uint32_t round) {
  set_status(SessionState::kRunning, round);
  const ParameterSet current = global_parameters();
  const Bytes body = encode_tensors(current);
  broadcast(Message{protocol::GlobalParamsHeader{round, config_.epochs, config_.batch_size,
                                                 config_.learning_rate},
                    body});

  std::map<std::string, ClientRoundStats> stats;
  std::vector<WeightedUpdate> updates;
  auto client_of = [&](std::uint64_t conn) -> std::string {
    for (const auto& [id, c] : admitted_) {
      if (c == conn) return id;
    }
    return {};
  };

  // Collects one reply of type H per admitted client for this round.
  auto collect = [&](auto tag_type, const char* phase, auto&& on_reply) {
    using H = decltype(tag_type);
    std::set<std::string> pending;
    for (const auto& [id, conn] : admitted_) pending.insert(id);
    const auto deadline = std::chrono::steady_clock::now() + config_.round_timeout;
    while (!pending.empty()) {
      std::optional<Event> e = pop_until(deadline);
      if (!e) {
        throw SessionFailure{std::string(errc_name(Errc::kRoundTimeout)) + ": round " +
                             std::to_string(round) + " " + phase + " missing " +
                             std::to_string(pending.size()) + " client(s)"};
      }
      const std::string id = e->stop ? std::string() : client_of(e->conn);
      const H* h = e->message ? std::get_if<H>(&e->message->header) : nullptr;
      if (id.empty() || h == nullptr) {
        handle_stray(*e, phase);
        continue;
      }
      if (h->round != round) {
        throw SessionFailure{"client " + id + " answered round " + std::to_string(h->round) +
                             " during round " + std::to_string(round)};
      }
      if (pending.erase(id) == 0) throw SessionFailure{"duplicate " + std::string(phase) + " from " + id};
      on_reply(id, *h, e->message->body);
    }
  };

  collect(protocol::LocalUpdateHeader{}, "local update",
          [&](const std::string& id, const protocol::LocalUpdateHeader& h, const Bytes& b) {
            if (h.num_examples == 0) throw SessionFailure{"client " + id + " trained on 0 examples"};
            ParameterSet params;
            try {
              params = decode_tensors(b, manifest_.schema);
            } catch (const Error& err) {
              throw SessionFailure{"client " + id + ": " + err.what()};
            }
            ClientRoundStats& s = stats[id];
            s.client_id = id;
            s.num_examples = h.num_examples;
            s.train_loss = h.train_loss;
            s.wall_time_s = h.wall_time_s;
            updates.push_back(WeightedUpdate{id, std::move(params), h.num_examples});
          });

  ParameterSet next;
  try {
    next = aggregate_weighted(updates, manifest_.schema);
  } catch (const Error& err) {
    throw SessionFailure{std::string("aggregation failed: ") + err.what()};
  }
  {
    std::lock_guard lock(state_mu_);
    global_ = next;
  }

  broadcast(Message{protocol::EvalRequestHeader{round}, encode_tensors(next)});
  collect(protocol::EvalReplyHeader{}, "eval reply",
          [&](const std::string& id, const protocol::EvalReplyHeader& h, const Bytes&) {
            ClientRoundStats& s = stats[id];
            s.eval_examples = h.num_examples;
            s.eval_loss = h.loss;
            s.eval_metric = h.metric;
          });

  RoundRecord record;
  record.round = round;
  record.params_digest = digest_parameters(next);
  double train_n = 0.0, train_sum = 0.0, eval_n = 0.0, eval_loss = 0.0, eval_metric = 0.0;
  {
    std::lock_guard lock(conn_mu_);
    for (auto& [id, s] : stats) s.platform = conns_.at(admitted_.at(id))->platform;
  }
  for (const auto& [id, s] : stats) {
    record.participants.push_back(id);
    record.clients.push_back(s);
    train_n += static_cast<double>(s.num_examples);
    train_sum += static_cast<double>(s.num_examples) * s.train_loss;
    eval_n += static_cast<double>(s.eval_examples);
    eval_loss += static_cast<double>(s.eval_examples) * s.eval_loss;
    eval_metric += static_cast<double>(s.eval_examples) * s.eval_metric;
  }
  record.aggregated_loss = train_sum / train_n;
  record.eval_loss = eval_n > 0 ? eval_loss / eval_n : 0.0;
  record.eval_metric = eval_n > 0 ? eval_metric / eval_n : 0.0;
  log_line(round_record_to_json(config_.session_id, record));
  std::lock_guard lock(state_mu_);
  rounds_.push_back(std::move(record));
}

void FlServer::control_loop() {
  try {
    admit_clients();
    for (std::uint32_t r = 1; r <= config_.rounds; ++r) run_round(r);
    const ParameterSet final_params = global_parameters();
    if (persist_) persist_(final_params);
    log_line(json{{"event", "finished"},
                  {"session_id", config_.session_id},
                  {"params_digest", digest_parameters(final_params)}}
                 .dump());
    set_status(SessionState::kFinished, config_.rounds);
    broadcast(Message{protocol::FinishHeader{}, {}});
  } catch (const SessionFailure& f) {
    const std::uint32_t round = status().round;
    log_line(json{{"event", "failed"}, {"session_id", config_.session_id}, {"error", f.reason}}.dump());
    set_status(SessionState::kFailed, round, f.reason);
    for (const auto& [id, conn] : admitted_) {
      try {
        send(conn, Message{protocol::AbortHeader{f.reason}, {}});
      } catch (const Error&) {
      }
    }
  } catch (const std::exception& e) {
    set_status(SessionState::kFailed, status().round, e.what());
  }
  // Connections and the port are released once the session ends.
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  listener_.close();
  std::lock_guard lock(conn_mu_);
  for (auto& [id, conn] : conns_) conn->socket.shutdown();
}

}  // namespace crossfl
