#pragma once

// Federated Riemannian alternating optimization with over-the-air
// aggregation of factored local models, plus an error-free FedAvg reference.
//
// One round:
//   devices  1-2  Riemannian mini-batch step on the penalized local objective
//            3-5  factor U sqrt(S), V sqrt(S); precode; transmit
//   server   1-4  superpose, LS-estimate, project to rank R, broadcast
//
// Devices within a round are independent; each one's randomness comes from
// streams keyed by (seed, device, round), so results do not depend on the
// order in which devices run.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fedrlr/airlink.hpp"
#include "fedrlr/objective.hpp"
#include "fedrlr/schedule.hpp"

namespace fedrlr::federation {

struct FedConfig {
  int num_devices = 10;
  Index batch_size = 6;
  long rounds = 2000;
  schedule::LrSchedule lr{};
  schedule::PenaltySchedule penalty{};
  airlink::PowerPolicy policy{};
  double sigma_z2 = 1.0;
  /// Target P_ave / sigma_z2 in dB; when set, gamma is recalibrated every
  /// round so the round's mean transmit power hits the target. Otherwise the
  /// fixed `gamma` is used.
  std::optional<double> snr_db = 25.0;
  double gamma = 1.0;
  std::uint64_t seed = 1;
  /// A RoundRecord is produced after round 1, every `record_every` rounds,
  /// and after the last round.
  long record_every = 10;
  int max_step_halvings = 5;

  void validate() const;
};

/// A learning problem already split across devices.
struct Task {
  LossKind kind = LossKind::kCrossEntropy;
  Architecture arch;
  std::vector<Dataset> shards;  // one per device
  Dataset test;

  void validate(int num_devices) const;
};

struct DeviceState {
  int device_id = 0;
  LowRankModel model;
};

struct ServerState {
  LowRankModel model;
  long round = 0;
};

struct RoundRecord {
  long round = 0;  // rounds completed
  double train_loss = 0.0;
  double test_accuracy = 0.0;  // NaN for regression tasks
  double consensus_gap = 0.0;
  double stationarity_norm = 0.0;
  std::vector<Index> ranks;  // server model, per layer
  std::int64_t cumulative_symbols = 0;
  double p_ave = 0.0;  // running mean device transmit power
  double test_loss = 0.0;
};

/// Per-round bookkeeping that is not part of the model state.
struct RoundStats {
  std::int64_t symbols = 0;
  double power_sum = 0.0;  // sum over devices of P_k
  double gamma = 1.0;
  int step_halvings = 0;
  bool aggregation_failed = false;
};

/// Riemannian SGD step of device `dev` against the broadcast model `theta0`
/// at round t. Biases restart from theta0's and take a plain SGD step.
/// A RankDeficient retraction halves eta (up to cfg.max_step_halvings) before
/// rethrowing. `halvings` (optional) accumulates the number of halvings.
DeviceState local_step(const DeviceState& dev, const Dataset& data,
                       const LowRankModel& theta0, long t, const FedConfig& cfg,
                       LossKind kind, int* halvings = nullptr);

/// One precoded frame per layer: U~ = U sqrt(S), V~ = V sqrt(S), fresh RLC
/// precoder keyed by (seed, device, round, layer).
std::vector<airlink::TransmitFrame> device_transmit(const DeviceState& dev, long t,
                                                    std::uint64_t seed);

/// LS-estimated superposition of one layer.
struct LayerEstimate {
  Matrix x_u;  // M x R
  Matrix x_v;  // R x N
  Vector bias_sum;
};

/// (1/sqrt K) X_U * (1/sqrt K) X_V, dense (for tests and diagnostics).
Matrix ota_pre_projection(const LayerEstimate& est, int num_devices);

/// Server model from OTA estimates: per layer P_{M_R}((1/K) X_U X_V), biases
/// bias_sum / K. Throws RankDeficient if a product degenerates.
LowRankModel server_aggregate(std::span<const LayerEstimate> layers, int num_devices,
                              const LowRankModel& like);

/// Error-free aggregation: per layer P_{M_R}((1/K) sum_k Theta_k), exact
/// bias mean.
LowRankModel aggregate_exact(std::span<const DeviceState> devices);

struct TrainingResult {
  std::vector<RoundRecord> records;
  std::vector<DeviceState> devices;
  ServerState server;
  int step_halvings = 0;
  int failed_aggregations = 0;
};

/// Shared starting point: Theta0^(0) from the init stream, copied to every
/// device.
std::pair<std::vector<DeviceState>, ServerState> initialize(const Task& task,
                                                            const FedConfig& cfg);

/// Executes round t (0-based) in place and returns its bookkeeping.
RoundStats run_round(std::vector<DeviceState>& devices, ServerState& server, const Task& task,
                     const FedConfig& cfg, long t);

/// Diagnostics of the current state (full-batch).
RoundRecord make_record(std::span<const DeviceState> devices, const ServerState& server,
                        const Task& task, std::int64_t cumulative_symbols, double p_ave);

/// Observer invoked after each record is produced.
using RecordSink = std::function<void(const RoundRecord&)>;

TrainingResult run_training(const Task& task, const FedConfig& cfg,
                            const RecordSink& sink = {});

struct FedAvgResult {
  std::vector<RoundRecord> records;
  DenseModel model;
};

/// Unconstrained dense weights, one local MSGD step per round
/// (Theta - eta grad of the mean batch loss), exact averaging.
FedAvgResult run_fedavg_baseline(const Task& task, const FedConfig& cfg,
                                 const RecordSink& sink = {});

}  // namespace fedrlr::federation
