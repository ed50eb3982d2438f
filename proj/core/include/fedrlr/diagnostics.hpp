#pragma once

// Convergence diagnostics and communication / FLOP accounting.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedrlr/objective.hpp"

namespace fedrlr::diagnostics {

/// (1/K) sum_k sum_layers ||Theta_k - Theta0*||_F^2 with
/// Theta0* = P_{M_R}((1/K) sum_k Theta_k) computed per layer. A mean of rank
/// below R is projected onto rank <= R instead of raising.
double consensus_gap(std::span<const LowRankModel> devices);

/// Same quantity against an explicit reference model.
double consensus_gap(std::span<const LowRankModel> devices, const LowRankModel& reference);

/// sqrt(sum_k sum_layers ||P_{Theta_k}(grad (1/(K D)) sum_l f(Theta_k; z_kl))||_F^2)
/// with full local datasets (Lagrange multipliers taken as zero).
double stationarity_norm(std::span<const LowRankModel> devices,
                         std::span<const Dataset> shards, LossKind kind);

/// Real symbols one FedRLR uplink round occupies: sum_layers R (M + N) plus
/// bias lengths. All devices share the resource block.
std::int64_t fedrlr_symbols_per_round(const Architecture& arch);

/// Digital FedAvg uplink: K (sum_layers M N + biases).
std::int64_t fedavg_symbols_per_round(const Architecture& arch, int num_devices);

/// Minimal view of a metrics stream for overhead comparisons.
struct AccuracyPoint {
  double accuracy = 0.0;
  std::int64_t cumulative_symbols = 0;
};

/// symbols(proposed reaches target) / symbols(benchmark reaches target),
/// each taken at the first point with accuracy >= target. Throws
/// TargetNotReached.
double comm_overhead_ratio(std::span<const AccuracyPoint> proposed,
                           std::span<const AccuracyPoint> benchmark, double target_accuracy);

/// Leading-order multiply-add counts per device/server step for one M x N
/// layer at rank R.
struct FlopTable {
  std::int64_t riemannian_gradient = 0;  // 2MNR + R^2 (M + N)
  std::int64_t retraction = 0;           // MNR
  std::int64_t compressed_representation = 0;  // (M + N) R
  std::int64_t rlc_precoding = 0;        // (M + N) R^2
  std::int64_t ls_estimation = 0;        // (M + N) R
  std::int64_t aggregated_model = 0;     // MNR
};

FlopTable flops_estimate(Index rows, Index cols, Index rank);

/// Stored size of the factored model over the dense one:
/// sum R (M + N) / sum M N (weights only).
double size_ratio(const Architecture& arch);

}  // namespace fedrlr::diagnostics
