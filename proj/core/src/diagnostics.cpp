#include "fedrlr/diagnostics.hpp"

#include <cmath>
#include <sstream>

#include "fedrlr/errors.hpp"

namespace fedrlr::diagnostics {
namespace {

void check_same_structure(std::span<const LowRankModel> devices) {
  if (devices.empty()) throw Error("diagnostics: no devices");
  const auto& ref = devices.front();
  for (const auto& d : devices) {
    if (d.layers.size() != ref.layers.size()) {
      throw DimensionMismatch("diagnostics: devices have different layer counts");
    }
    for (std::size_t l = 0; l < d.layers.size(); ++l) {
      if (d.layers[l].rows() != ref.layers[l].rows() ||
          d.layers[l].cols() != ref.layers[l].cols()) {
        throw DimensionMismatch("diagnostics: layer " + std::to_string(l) + " shapes differ");
      }
    }
  }
}

std::int64_t first_reaching(std::span<const AccuracyPoint> stream, double target,
                            const char* which) {
  for (const auto& p : stream) {
    if (p.accuracy >= target) return p.cumulative_symbols;
  }
  std::ostringstream os;
  os << which << " stream never reaches accuracy " << target;
  throw TargetNotReached(os.str());
}

// Best approximation of left * right^T with rank <= r. Unlike the manifold
// projection this accepts a degenerate mean (e.g. devices that cancel).
Matrix best_rank_at_most(const Matrix& left, const Matrix& right, Index r) {
  Eigen::HouseholderQR<Matrix> qr_l(left);
  Eigen::HouseholderQR<Matrix> qr_r(right);
  const Index pl = std::min(left.rows(), left.cols());
  const Index pr = std::min(right.rows(), right.cols());
  const Matrix r_l = qr_l.matrixQR().topRows(pl).triangularView<Eigen::Upper>();
  const Matrix r_r = qr_r.matrixQR().topRows(pr).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> svd(r_l * r_r.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index keep = std::min<Index>(r, svd.singularValues().size());
  const Matrix q_l = qr_l.householderQ() * Matrix::Identity(left.rows(), pl);
  const Matrix q_r = qr_r.householderQ() * Matrix::Identity(right.rows(), pr);
  return (q_l * svd.matrixU().leftCols(keep)) * svd.singularValues().head(keep).asDiagonal() *
         (q_r * svd.matrixV().leftCols(keep)).transpose();
}

}  // namespace

double consensus_gap(std::span<const LowRankModel> devices, const LowRankModel& reference) {
  check_same_structure(devices);
  double total = 0.0;
  for (std::size_t l = 0; l < reference.layers.size(); ++l) {
    const Matrix ref = reference.layers[l].ambient();
    for (const auto& d : devices) total += (d.layers[l].ambient() - ref).squaredNorm();
  }
  return total / static_cast<double>(devices.size());
}

double consensus_gap(std::span<const LowRankModel> devices) {
  check_same_structure(devices);
  const double inv_k = 1.0 / static_cast<double>(devices.size());
  double total = 0.0;
  for (std::size_t l = 0; l < devices.front().layers.size(); ++l) {
    const auto& first = devices.front().layers[l];
    const Index r = first.rank();
    Matrix left(first.rows(), r * static_cast<Index>(devices.size()));
    Matrix right(first.cols(), left.cols());
    for (std::size_t k = 0; k < devices.size(); ++k) {
      left.middleCols(static_cast<Index>(k) * r, r) = devices[k].layers[l].balanced_left() * inv_k;
      right.middleCols(static_cast<Index>(k) * r, r) = devices[k].layers[l].balanced_right();
    }
    const Matrix star = best_rank_at_most(left, right, r);
    for (const auto& d : devices) total += (d.layers[l].ambient() - star).squaredNorm();
  }
  return total * inv_k;
}

double stationarity_norm(std::span<const LowRankModel> devices,
                         std::span<const Dataset> shards, LossKind kind) {
  check_same_structure(devices);
  if (shards.size() != devices.size()) {
    throw DimensionMismatch("stationarity_norm: one dataset per device required");
  }
  const double inv_k = 1.0 / static_cast<double>(devices.size());
  double total = 0.0;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    const ModelGradient g = euclid_grad(devices[k], shards[k], kind);
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      total += manifold::tangent_project(devices[k].layers[l], g.weights[l] * inv_k)
                   .squaredNorm();
    }
  }
  return std::sqrt(total);
}

std::int64_t fedrlr_symbols_per_round(const Architecture& arch) {
  arch.validate();
  std::int64_t total = 0;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const std::int64_t m = arch.widths[l + 1];
    const std::int64_t n = arch.widths[l];
    total += arch.ranks[l] * (m + n);
    if (arch.train_biases) total += m;
  }
  return total;
}

std::int64_t fedavg_symbols_per_round(const Architecture& arch, int num_devices) {
  arch.validate();
  std::int64_t per_device = 0;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const std::int64_t m = arch.widths[l + 1];
    const std::int64_t n = arch.widths[l];
    per_device += m * n;
    if (arch.train_biases) per_device += m;
  }
  return per_device * num_devices;
}

double comm_overhead_ratio(std::span<const AccuracyPoint> proposed,
                           std::span<const AccuracyPoint> benchmark, double target_accuracy) {
  const auto num = first_reaching(proposed, target_accuracy, "proposed");
  const auto den = first_reaching(benchmark, target_accuracy, "benchmark");
  if (den <= 0) throw Error("comm_overhead_ratio: benchmark used no symbols");
  return static_cast<double>(num) / static_cast<double>(den);
}

FlopTable flops_estimate(Index rows, Index cols, Index rank) {
  if (rows < 1 || cols < 1 || rank < 1 || rank > std::min(rows, cols)) {
    throw DimensionMismatch("flops_estimate: need 1 <= R <= min(M, N)");
  }
  const std::int64_t m = rows;
  const std::int64_t n = cols;
  const std::int64_t r = rank;
  FlopTable t;
  t.riemannian_gradient = 2 * m * n * r + r * r * (m + n);
  t.retraction = m * n * r;
  t.compressed_representation = (m + n) * r;
  t.rlc_precoding = (m + n) * r * r;
  t.ls_estimation = (m + n) * r;
  t.aggregated_model = m * n * r;
  return t;
}

double size_ratio(const Architecture& arch) {
  arch.validate();
  double compressed = 0.0;
  double dense = 0.0;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const double m = static_cast<double>(arch.widths[l + 1]);
    const double n = static_cast<double>(arch.widths[l]);
    compressed += static_cast<double>(arch.ranks[l]) * (m + n);
    dense += m * n;
  }
  return compressed / dense;
}

}  // namespace fedrlr::diagnostics
