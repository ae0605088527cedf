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

#include "crossfl/client_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "crossfl/model_package.hpp"
#include "crossfl/net.hpp"

namespace crossfl {
namespace {

using Clock = std::chrono::steady_clock;
namespace proto = protocol;

constexpr double kSleepThreshold = 1e-3;
constexpr double kSpinMargin = 1e-4;

LayoutAccessCounts counts_since(const LayoutAccessCounts& start) {
  const LayoutAccessCounts& now = thread_layout_counts();
  return {now.index_map_reads - start.index_map_reads, now.index_map_writes - start.index_map_writes,
          now.layer_tree_reads - start.layer_tree_reads,
          now.layer_tree_writes - start.layer_tree_writes};
}

// The client's on-device model representation. Parameters enter and leave
// through the platform layout.
class DeviceModel {
 public:
  DeviceModel(const ClientProfile& profile, const ParameterSchema& schema, const ParameterSet& initial)
      : platform_(profile.platform), emulate_(profile.emulate_layout), schema_(schema) {
    if (emulate_ && platform_ == kLayerTreePlatform) tree_ = build_layer_tree(schema_);
    store(initial);
  }

  // Writes `params` into the layout and returns what the layout reads back.
  ParameterSet store(const ParameterSet& params) {
    if (!emulate_) return params;
    if (platform_ == kLayerTreePlatform) {
      tree_ = set_in_layer_tree(tree_, params, schema_);
      return from_layer_tree(tree_, schema_);
    }
    index_ = to_index_map(params, schema_);
    return from_index_map(index_, schema_);
  }

 private:
  std::string platform_;
  bool emulate_;
  ParameterSchema schema_;
  IndexMapLayout index_;
  LayerTreeLayout tree_;
};

ParameterSet decode_body(const proto::Message& m, const ParameterSchema& schema) {
  try {
    return decode_tensors(m.body, schema);
  } catch (const Error& e) {
    throw Error(Errc::kTransportError, std::string("bad parameter body: ") + e.what(), e.code());
  }
}

}  // namespace

void validate_profile(const ClientProfile& p) {
  if (p.client_id.empty()) throw Error(Errc::kInvalidArgument, "client_id is empty");
  if (!is_platform(p.platform)) {
    throw Error(Errc::kInvalidArgument, "unknown platform '" + p.platform + "'");
  }
  if (!(p.speed_factor > 0.0) || !std::isfinite(p.speed_factor)) {
    throw Error(Errc::kInvalidArgument, "speed_factor must be > 0");
  }
}

SpeedPacer::SpeedPacer(double speed_factor) : speed_factor_(speed_factor) {
  if (!(speed_factor > 0.0) || !std::isfinite(speed_factor)) {
    throw Error(Errc::kInvalidArgument, "speed_factor must be > 0");
  }
}

void SpeedPacer::on_step(double step_cpu_seconds) {
  compute_s_ += step_cpu_seconds;
  // Factors below 1 cannot speed a device up; they only add no delay.
  debt_s_ += std::max(0.0, speed_factor_ - 1.0) * step_cpu_seconds;
  if (debt_s_ > kSleepThreshold) pay(debt_s_);
}

void SpeedPacer::flush() {
  if (debt_s_ > 0.0) pay(debt_s_);
}

void SpeedPacer::reset() {
  // Overpaid delay (oversleep under load) is credited against later rounds.
  debt_s_ = std::min(debt_s_, 0.0);
  compute_s_ = 0.0;
  injected_s_ = 0.0;
}

void SpeedPacer::pay(double seconds) {
  const auto start = Clock::now();
  const auto target = start + std::chrono::duration_cast<Clock::duration>(
                                  std::chrono::duration<double>(seconds));
  if (seconds > kSleepThreshold) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds - kSpinMargin));
  }
  while (Clock::now() < target) {
  }
  const double waited = std::chrono::duration<double>(Clock::now() - start).count();
  injected_s_ += waited;
  debt_s_ -= waited;
}

std::uint64_t round_seed(std::uint64_t client_seed, std::uint32_t round) {
  // splitmix64 finalizer
  std::uint64_t z = client_seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(round) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

ClientReport run_client(const ClientProfile& profile, const std::string& backend_url,
                        const std::string& data_type, const Dataset& shard,
                        const ClientOptions& options) {
  validate_profile(profile);
  if (shard.size() == 0) throw Error(Errc::kEmptyDataset, "client shard is empty");

  const LayoutAccessCounts counts_start = thread_layout_counts();
  ClientReport report;
  report.client_id = profile.client_id;
  report.platform = profile.platform;

  BackendClient backend(backend_url, options.retry);

  // Model Request
  const ModelAdvertisement ad = backend.advertise(data_type, profile.platform);
  const DownloadedModel dl = backend.download(ad.name, ad.version, profile.platform);
  if (schema_digest(dl.manifest.schema) != ad.schema_digest) {
    throw Error(Errc::kSessionRejected, "downloaded schema does not match the advertisement",
                Errc::kDigestMismatch);
  }
  report.model_name = ad.name;
  report.model_version = ad.version;
  const ParameterSchema& schema = dl.manifest.schema;

  DeviceModel device(profile, schema, decode_tensors(dl.variant, schema));
  MlpModel model(dl.manifest.architecture, dl.manifest.loss);

  // FL Server Setup
  const TrainTicket ticket = backend.request_training(ad.name, ad.version, options.train);
  report.session_id = ticket.session_id;
  report.port = ticket.port;

  net::Socket socket = net::connect_tcp(backend.host(), ticket.port);
  net::write_message(socket, proto::Message{proto::JoinHeader{profile.client_id, ad.name, ad.version,
                                                               profile.platform, ad.schema_digest},
                                            {}});

  // FL Training
  SpeedPacer pacer(profile.speed_factor);
  bool joined = false;
  try {
    for (;;) {
      std::optional<proto::Message> msg = net::read_message(socket);
      if (!msg) throw Error(Errc::kTransportError, "server closed the connection");

      if (const auto* gp = std::get_if<proto::GlobalParamsHeader>(&msg->header)) {
        joined = true;
        model.restore(device.store(decode_body(*msg, schema)));
        TrainConfig cfg;
        cfg.epochs = gp->epochs;
        cfg.batch_size = static_cast<std::uint32_t>(
            std::min<std::size_t>(std::max<std::uint32_t>(gp->batch_size, 1u), shard.size()));
        cfg.learning_rate = gp->learning_rate;
        cfg.seed = round_seed(profile.seed, gp->round);

        pacer.reset();
        const auto t0 = Clock::now();
        const TrainStats stats =
            model.train(shard, cfg, [&pacer](double step) { pacer.on_step(step); });
        pacer.flush();

        ClientRoundLog log;
        log.round = gp->round;
        log.train_loss = stats.epoch_losses.empty() ? 0.0 : stats.epoch_losses.back();
        log.wall_time_s = pacer.device_time_s();
        log.elapsed_s = std::chrono::duration<double>(Clock::now() - t0).count();

        const ParameterSet local = device.store(model.parameters());
        net::write_message(socket, proto::Message{proto::LocalUpdateHeader{gp->round, shard.size(),
                                                                           log.train_loss,
                                                                           log.wall_time_s},
                                                  encode_tensors(local)});
        report.rounds.push_back(log);

        TelemetryRecord t;
        t.client_id = profile.client_id;
        t.platform = profile.platform;
        t.device = profile.device;
        t.ram = profile.ram;
        t.session_id = ticket.session_id;
        t.round = gp->round;
        t.wall_time_s = std::max(log.wall_time_s, 1e-9);
        try {
          backend.post_telemetry(t);
          ++report.telemetry_posted;
        } catch (const Error&) {
          // Telemetry is best effort; training goes on.
        }
      } else if (const auto* er = std::get_if<proto::EvalRequestHeader>(&msg->header)) {
        MlpModel eval_model(dl.manifest.architecture, dl.manifest.loss);
        eval_model.restore(device.store(decode_body(*msg, schema)));
        const EvalResult res = eval_model.evaluate(shard);
        net::write_message(socket, proto::Message{proto::EvalReplyHeader{er->round, shard.size(),
                                                                          res.loss, res.metric},
                                                  {}});
        for (ClientRoundLog& log : report.rounds) {
          if (log.round == er->round) {
            log.eval_loss = res.loss;
            log.eval_metric = res.metric;
          }
        }
      } else if (std::holds_alternative<proto::FinishHeader>(msg->header)) {
        report.status = ClientStatus::kFinished;
        break;
      } else if (const auto* ab = std::get_if<proto::AbortHeader>(&msg->header)) {
        if (!joined) throw Error(Errc::kSessionRejected, ab->reason);
        throw Error(Errc::kTransportError, "session aborted: " + ab->reason);
      } else {
        throw Error(Errc::kTransportError, "unexpected message tag " + std::to_string(static_cast<int>(msg->tag())));
      }
    }
  } catch (const Error& e) {
    if (!joined) throw;
    report.status = ClientStatus::kFailed;
    report.error = e.what();
    report.error_code = e.code();
  }
  report.layout_counts = counts_since(counts_start);
  return report;
}

}  // namespace crossfl
