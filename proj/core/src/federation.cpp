#include "fedrlr/federation.hpp"

#include <cmath>
#include <limits>

#include "fedrlr/diagnostics.hpp"
#include "fedrlr/errors.hpp"

namespace fedrlr::federation {
namespace {

using manifold::RankRPoint;

Rng minibatch_stream(const FedConfig& cfg, int device, long t) {
  return make_stream(cfg.seed, Stream::kMinibatch, static_cast<std::uint64_t>(device),
                     static_cast<std::uint64_t>(t));
}

bool should_record(long completed, const FedConfig& cfg) {
  return completed == 1 || completed == cfg.rounds || completed % cfg.record_every == 0;
}

std::vector<LowRankModel> models_of(std::span<const DeviceState> devices) {
  std::vector<LowRankModel> out;
  out.reserve(devices.size());
  for (const auto& d : devices) out.push_back(d.model);
  return out;
}

double mean_train_loss(std::span<const DeviceState> devices, const Task& task) {
  double total = 0.0;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    total += loss(devices[k].model, task.shards[k], task.kind);
  }
  return total / static_cast<double>(devices.size());
}

}  // namespace

void FedConfig::validate() const {
  if (num_devices < 1) throw Error("FedConfig: K must be >= 1");
  if (batch_size < 1) throw Error("FedConfig: D_m must be >= 1");
  if (rounds < 1) throw Error("FedConfig: T_iter must be >= 1");
  if (record_every < 1) throw Error("FedConfig: record_every must be >= 1");
  if (!(lr.q > 0.0)) throw Error("FedConfig: q must be > 0");
  if (lr.kind == schedule::LrSchedule::Kind::kHarmonic && !(lr.nu > 0.0)) {
    throw Error("FedConfig: nu must be > 0");
  }
  if (penalty.kind == schedule::PenaltySchedule::Kind::kScheduled &&
      !(penalty.c1 > 0.0 && penalty.c1 < 1.0)) {
    throw InvalidC1("FedConfig: c1 must lie in (0, 1)");
  }
  if (!(sigma_z2 >= 0.0)) throw Error("FedConfig: sigma_z2 must be >= 0");
  if (!(gamma > 0.0)) throw Error("FedConfig: gamma must be > 0");
  if (policy.h_min < 0.0) throw Error("FedConfig: h_min must be >= 0");
  if (max_step_halvings < 0) throw Error("FedConfig: max_step_halvings must be >= 0");
}

void Task::validate(int num_devices) const {
  arch.validate();
  if (static_cast<int>(shards.size()) != num_devices) {
    throw DimensionMismatch("task has " + std::to_string(shards.size()) +
                            " shards for K = " + std::to_string(num_devices));
  }
  const Index n_out = arch.widths.back();
  for (const auto& s : shards) {
    if (s.input_dim() != arch.widths.front()) {
      throw DimensionMismatch("shard input dimension does not match the model");
    }
    s.validate(kind, n_out);
  }
  if (test.size() > 0) test.validate(kind, n_out);
}

DeviceState local_step(const DeviceState& dev, const Dataset& data, const LowRankModel& theta0,
                       long t, const FedConfig& cfg, LossKind kind, int* halvings) {
  const double eta = schedule::eta(cfg.lr, t);
  const double mu = schedule::mu(cfg.penalty, cfg.lr, t);
  Rng rng = minibatch_stream(cfg, dev.device_id, t);
  const MiniBatch batch = sample_minibatch(data, cfg.batch_size, rng);
  const ModelGradient g =
      penalized_euclid_grad(dev.model, theta0, data, batch, mu, cfg.num_devices, kind);

  DeviceState next{dev.device_id, dev.model};
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    const RankRPoint& x = dev.model.layers[l];
    const Matrix rg = manifold::riemannian_gradient(x, g.weights[l]);
    double step = eta;
    for (int attempt = 0;; ++attempt) {
      try {
        next.model.layers[l] = manifold::retract(x, rg, step);
        break;
      } catch (const RankDeficient&) {
        if (attempt >= cfg.max_step_halvings) throw;
        step *= 0.5;
        if (halvings) ++*halvings;
      }
    }
    next.model.biases[l] = theta0.biases[l];
    if (dev.model.train_biases) next.model.biases[l] -= eta * g.biases[l];
  }
  return next;
}

std::vector<airlink::TransmitFrame> device_transmit(const DeviceState& dev, long t,
                                                    std::uint64_t seed) {
  std::vector<airlink::TransmitFrame> frames;
  frames.reserve(dev.model.layers.size());
  for (std::size_t l = 0; l < dev.model.layers.size(); ++l) {
    const RankRPoint& x = dev.model.layers[l];
    const auto f = airlink::draw_precoder(x.rank(), dev.device_id, t, seed, static_cast<int>(l));
    Vector bias;
    if (dev.model.train_biases) bias = dev.model.biases[l];
    frames.push_back(airlink::precode(x.balanced_left(), x.balanced_right(), f, std::move(bias)));
  }
  return frames;
}

Matrix ota_pre_projection(const LayerEstimate& est, int num_devices) {
  return (est.x_u * est.x_v) / static_cast<double>(num_devices);
}

LowRankModel server_aggregate(std::span<const LayerEstimate> layers, int num_devices,
                              const LowRankModel& like) {
  if (layers.size() != like.layers.size()) {
    throw DimensionMismatch("server_aggregate: one estimate per layer required");
  }
  const double inv_k = 1.0 / static_cast<double>(num_devices);
  LowRankModel out = like;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerEstimate& e = layers[l];
    const Index r = like.layers[l].rank();
    // (1/sqrt K) X_U (1/sqrt K) X_V, truncated without forming the product.
    out.layers[l] = manifold::svd_truncate_factored(e.x_u * inv_k, e.x_v.transpose(), r);
    if (like.train_biases) out.biases[l] = e.bias_sum * inv_k;
  }
  return out;
}

LowRankModel aggregate_exact(std::span<const DeviceState> devices) {
  if (devices.empty()) throw Error("aggregate_exact: no devices");
  const double inv_k = 1.0 / static_cast<double>(devices.size());
  LowRankModel out = devices.front().model;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    const RankRPoint& first = devices.front().model.layers[l];
    const Index r = first.rank();
    Matrix left(first.rows(), r * static_cast<Index>(devices.size()));
    Matrix right(first.cols(), left.cols());
    Vector bias = Vector::Zero(out.biases[l].size());
    for (std::size_t k = 0; k < devices.size(); ++k) {
      const RankRPoint& x = devices[k].model.layers[l];
      left.middleCols(static_cast<Index>(k) * r, r) = x.balanced_left() * inv_k;
      right.middleCols(static_cast<Index>(k) * r, r) = x.balanced_right();
      bias += devices[k].model.biases[l];
    }
    out.layers[l] = manifold::svd_truncate_factored(left, right, r);
    out.biases[l] = bias * inv_k;
  }
  return out;
}

std::pair<std::vector<DeviceState>, ServerState> initialize(const Task& task,
                                                            const FedConfig& cfg) {
  cfg.validate();
  task.validate(cfg.num_devices);
  Rng init = make_stream(cfg.seed, Stream::kInit);
  ServerState server{init_low_rank_model(task.arch, init), 0};
  std::vector<DeviceState> devices;
  for (int k = 0; k < cfg.num_devices; ++k) devices.push_back({k, server.model});
  return {std::move(devices), std::move(server)};
}

RoundStats run_round(std::vector<DeviceState>& devices, ServerState& server, const Task& task,
                     const FedConfig& cfg, long t) {
  RoundStats stats;
  const int k_dev = static_cast<int>(devices.size());

  // Device steps 1-2.
  for (int k = 0; k < k_dev; ++k) {
    devices[k] = local_step(devices[k], task.shards[k], server.model, t, cfg, task.kind,
                            &stats.step_halvings);
  }

  // Device steps 3-5.
  std::vector<std::vector<airlink::TransmitFrame>> frames;
  frames.reserve(devices.size());
  for (const auto& d : devices) frames.push_back(device_transmit(d, t, cfg.seed));
  for (const auto& f : frames.front()) stats.symbols += f.symbols();

  if (cfg.policy.kind == airlink::PowerPolicy::Kind::kErrorFree) {
    server.model = aggregate_exact(devices);
    ++server.round;
    return stats;
  }

  Rng chan_rng = make_stream(cfg.seed, Stream::kChannel, static_cast<std::uint64_t>(t));
  airlink::ChannelRealization chan = airlink::draw_channel(k_dev, cfg.sigma_z2, 1.0, chan_rng);
  std::vector<double> energy(devices.size(), 0.0);
  for (int k = 0; k < k_dev; ++k)
    for (const auto& f : frames[k]) energy[k] += f.energy();
  chan.gamma = cfg.snr_db
                   ? airlink::calibrate_gamma(cfg.policy, chan.h, energy,
                                              std::pow(10.0, *cfg.snr_db / 10.0) * cfg.sigma_z2)
                   : cfg.gamma;
  stats.gamma = chan.gamma;
  for (int k = 0; k < k_dev; ++k) {
    stats.power_sum +=
        std::norm(airlink::policy_coeffs(cfg.policy, chan.h[k], chan.gamma).p) * energy[k];
  }

  // Server steps 1-3, layer by layer.
  const double rho = airlink::policy_coeffs(cfg.policy, chan.h.front(), chan.gamma).rho;
  std::vector<LayerEstimate> estimates;
  std::vector<airlink::TransmitFrame> layer_frames(devices.size());
  for (std::size_t l = 0; l < server.model.layers.size(); ++l) {
    for (int k = 0; k < k_dev; ++k) layer_frames[k] = frames[k][l];
    Rng noise = make_stream(cfg.seed, Stream::kNoise, static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(l));
    const auto rx = airlink::mac_superpose(layer_frames, chan, cfg.policy, noise);
    estimates.push_back({airlink::ls_estimate(rx.y_u, rho), airlink::ls_estimate(rx.y_v, rho),
                         airlink::ls_estimate(rx.y_bias, rho)});
  }

  // Server step 4 (error-free broadcast). A degenerate estimate keeps the
  // previous global model.
  try {
    server.model = server_aggregate(estimates, k_dev, server.model);
  } catch (const RankDeficient&) {
    stats.aggregation_failed = true;
  }
  ++server.round;
  return stats;
}

RoundRecord make_record(std::span<const DeviceState> devices, const ServerState& server,
                        const Task& task, std::int64_t cumulative_symbols, double p_ave) {
  RoundRecord rec;
  rec.round = server.round;
  rec.train_loss = mean_train_loss(devices, task);
  if (task.test.size() > 0) {
    rec.test_loss = loss(server.model, task.test, task.kind);
    rec.test_accuracy = task.kind == LossKind::kCrossEntropy
                            ? accuracy(server.model, task.test)
                            : std::numeric_limits<double>::quiet_NaN();
  } else {
    rec.test_loss = std::numeric_limits<double>::quiet_NaN();
    rec.test_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  const auto models = models_of(devices);
  rec.consensus_gap = diagnostics::consensus_gap(models);
  rec.stationarity_norm = diagnostics::stationarity_norm(models, task.shards, task.kind);
  for (const auto& layer : server.model.layers) rec.ranks.push_back(layer.rank());
  rec.cumulative_symbols = cumulative_symbols;
  rec.p_ave = p_ave;
  return rec;
}

TrainingResult run_training(const Task& task, const FedConfig& cfg, const RecordSink& sink) {
  auto [devices, server] = initialize(task, cfg);
  TrainingResult result;
  std::int64_t symbols = 0;
  double power_sum = 0.0;
  for (long t = 0; t < cfg.rounds; ++t) {
    RoundStats stats;
    try {
      stats = run_round(devices, server, task, cfg, t);
    } catch (const Error& e) {
      throw Error("round " + std::to_string(t) + ": " + e.what());
    }
    symbols += stats.symbols;
    power_sum += stats.power_sum;
    result.step_halvings += stats.step_halvings;
    if (stats.aggregation_failed) ++result.failed_aggregations;

    const long completed = t + 1;
    if (should_record(completed, cfg)) {
      const double p_ave =
          power_sum / (static_cast<double>(cfg.num_devices) * static_cast<double>(completed));
      result.records.push_back(make_record(devices, server, task, symbols, p_ave));
      if (sink) sink(result.records.back());
    }
  }
  result.devices = std::move(devices);
  result.server = std::move(server);
  return result;
}

FedAvgResult run_fedavg_baseline(const Task& task, const FedConfig& cfg,
                                 const RecordSink& sink) {
  cfg.validate();
  task.validate(cfg.num_devices);
  Rng init = make_stream(cfg.seed, Stream::kInit);
  DenseModel global = init_dense_model(task.arch, init);
  const std::int64_t per_round = diagnostics::fedavg_symbols_per_round(task.arch, cfg.num_devices);
  const double inv_k = 1.0 / static_cast<double>(cfg.num_devices);

  FedAvgResult result;
  std::vector<DenseModel> locals(static_cast<std::size_t>(cfg.num_devices), global);
  for (long t = 0; t < cfg.rounds; ++t) {
    const double eta = schedule::eta(cfg.lr, t);
    for (int k = 0; k < cfg.num_devices; ++k) {
      Rng rng = minibatch_stream(cfg, k, t);
      const MiniBatch batch = sample_minibatch(task.shards[k], cfg.batch_size, rng);
      const ModelGradient g = euclid_grad(global, task.shards[k], batch, task.kind);
      DenseModel& local = locals[static_cast<std::size_t>(k)];
      for (std::size_t l = 0; l < global.layers.size(); ++l) {
        local.layers[l] = global.layers[l] - eta * g.weights[l];
        local.biases[l] = global.biases[l];
        if (global.train_biases) local.biases[l] -= eta * g.biases[l];
      }
    }
    for (std::size_t l = 0; l < global.layers.size(); ++l) {
      global.layers[l].setZero();
      global.biases[l].setZero();
      for (const auto& local : locals) {
        global.layers[l] += local.layers[l];
        global.biases[l] += local.biases[l];
      }
      global.layers[l] *= inv_k;
      global.biases[l] *= inv_k;
    }

    const long completed = t + 1;
    if (!should_record(completed, cfg)) continue;
    RoundRecord rec;
    rec.round = completed;
    double train = 0.0;
    double stationarity = 0.0;
    for (int k = 0; k < cfg.num_devices; ++k) {
      train += loss(global, task.shards[k], task.kind);
      const ModelGradient g = euclid_grad(global, task.shards[k], full_batch(task.shards[k]),
                                          task.kind);
      for (const auto& w : g.weights) stationarity += (w * inv_k).squaredNorm();
    }
    rec.train_loss = train * inv_k;
    rec.stationarity_norm = std::sqrt(stationarity);
    double gap = 0.0;
    for (const auto& local : locals)
      for (std::size_t l = 0; l < global.layers.size(); ++l)
        gap += (local.layers[l] - global.layers[l]).squaredNorm();
    rec.consensus_gap = gap * inv_k;
    if (task.test.size() > 0) {
      rec.test_loss = loss(global, task.test, task.kind);
      rec.test_accuracy = task.kind == LossKind::kCrossEntropy
                              ? accuracy(global, task.test)
                              : std::numeric_limits<double>::quiet_NaN();
    } else {
      rec.test_loss = std::numeric_limits<double>::quiet_NaN();
      rec.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    for (const auto& w : global.layers) rec.ranks.push_back(manifold::numerical_rank(w));
    rec.cumulative_symbols = per_round * completed;
    rec.p_ave = 0.0;
    result.records.push_back(rec);
    if (sink) sink(rec);
  }
  result.model = std::move(global);
  return result;
}

}  // namespace fedrlr::federation
