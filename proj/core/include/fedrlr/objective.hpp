#pragma once

// Task losses and their Euclidean gradients for layered models whose weight
// matrices are either rank-R manifold points (LowRankModel) or dense
// matrices (DenseModel, used by the FedAvg reference).

#include <cstdint>
#include <vector>

#include "fedrlr/manifold.hpp"
#include "fedrlr/rng.hpp"

namespace fedrlr {

enum class LossKind { kCrossEntropy, kLeastSquares };
enum class Activation { kReLU, kIdentity };

/// Samples are stored column-wise. Classification sets use `labels`,
/// regression sets use `targets` (one column per sample).
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  Matrix targets;
  int device_id = 0;

  Index size() const { return features.cols(); }
  Index input_dim() const { return features.rows(); }

  /// Throws DimensionMismatch / Error if empty or internally inconsistent.
  void validate(LossKind kind, Index num_outputs) const;
};

struct MiniBatch {
  std::vector<Index> indices;
  Index size() const { return static_cast<Index>(indices.size()); }
};

/// Sequential layers x -> act(W x + b); hidden layers use `hidden_activation`,
/// the last layer is always linear (logits or regression output).
struct LowRankModel {
  std::vector<manifold::RankRPoint> layers;
  std::vector<Vector> biases;
  Activation hidden_activation = Activation::kReLU;
  bool train_biases = true;

  void validate() const;
  Index input_dim() const { return layers.front().cols(); }
  Index output_dim() const { return layers.back().rows(); }
};

struct DenseModel {
  std::vector<Matrix> layers;
  std::vector<Vector> biases;
  Activation hidden_activation = Activation::kReLU;
  bool train_biases = true;

  void validate() const;
  Index input_dim() const { return layers.front().cols(); }
  Index output_dim() const { return layers.back().rows(); }
};

/// Per-layer gradients with respect to the dense weight matrices and biases.
struct ModelGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Output for a batch of inputs (one column per sample). Low-rank layers use
/// the factored product U (Sigma (V^T x)).
Matrix forward(const LowRankModel& model, const Matrix& inputs);
Matrix forward(const DenseModel& model, const Matrix& inputs);
Vector forward(const LowRankModel& model, const Vector& x);

/// Mean loss over the batch (or the whole dataset).
double loss(const LowRankModel& model, const Dataset& data, const MiniBatch& batch,
            LossKind kind);
double loss(const DenseModel& model, const Dataset& data, const MiniBatch& batch,
            LossKind kind);
double loss(const LowRankModel& model, const Dataset& data, LossKind kind);
double loss(const DenseModel& model, const Dataset& data, LossKind kind);

/// Gradient of the mean batch loss.
ModelGradient euclid_grad(const LowRankModel& model, const Dataset& data,
                          const MiniBatch& batch, LossKind kind);
ModelGradient euclid_grad(const DenseModel& model, const Dataset& data,
                          const MiniBatch& batch, LossKind kind);
ModelGradient euclid_grad(const LowRankModel& model, const Dataset& data, LossKind kind);

/// Euclidean gradient of the penalized local objective
///   (1/K) mean_batch f(Theta_k) + (mu / 2K) ||Theta_k - Theta_0||_F^2
/// per layer: (1/K) grad f + (mu/K)(Theta_k - Theta_0). Bias entries carry
/// (1/K) grad_b f; the consensus penalty acts on weight matrices only.
ModelGradient penalized_euclid_grad(const LowRankModel& model_k, const LowRankModel& theta0,
                                    const Dataset& data, const MiniBatch& batch, double mu,
                                    int num_devices, LossKind kind);

/// Fraction of samples whose arg-max output matches the label.
double accuracy(const LowRankModel& model, const Dataset& data);
double accuracy(const DenseModel& model, const Dataset& data);

/// Uniform sample of `batch_size` distinct indices. Throws BatchTooLarge.
MiniBatch sample_minibatch(const Dataset& data, Index batch_size, Rng& rng);
MiniBatch full_batch(const Dataset& data);

/// Layer sizes {n_in, h_1, ..., n_out}; one rank per weight matrix.
struct Architecture {
  std::vector<Index> widths;
  std::vector<Index> ranks;
  Activation hidden_activation = Activation::kReLU;
  bool train_biases = true;

  Index num_layers() const { return static_cast<Index>(ranks.size()); }
  void validate() const;
};

/// Each layer is svd_truncate(G, R) with G_ij ~ N(0, 2 / fan_in); biases 0.
LowRankModel init_low_rank_model(const Architecture& arch, Rng& rng);
/// Same draw without the truncation (FedAvg reference).
DenseModel init_dense_model(const Architecture& arch, Rng& rng);

/// Planted low-rank regression: y = W* x + noise with x ~ N(0, I_N) and
/// W* = A B^T / sqrt(R_true), A, B standard normal.
struct PlantedTask {
  std::vector<Dataset> shards;
  Dataset test;
  Matrix w_star;
};

PlantedTask make_planted_dataset(Index rows, Index cols, Index rank_true, int num_devices,
                                 Index samples_per_device, double noise_sd, Rng& rng);

/// Split a dataset into `num_devices` equal shards after a seeded shuffle.
/// Leftover samples (size % num_devices) are dropped.
std::vector<Dataset> shard_uniform(const Dataset& data, int num_devices, Rng& rng);

/// Concatenate shards (for full-data diagnostics).
Dataset concatenate(const std::vector<Dataset>& shards);

}  // namespace fedrlr
