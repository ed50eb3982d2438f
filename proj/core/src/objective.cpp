#include "fedrlr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedrlr/errors.hpp"

namespace fedrlr {
namespace {

using manifold::RankRPoint;

// Largest |logit| accepted before the softmax; exp() of max-subtracted
// logits cannot overflow, but logits this large mean the iterate diverged.
constexpr double kMaxLogit = 1e300;

Matrix apply_layer(const RankRPoint& w, const Matrix& a) { return w.apply(a); }
Matrix apply_layer(const Matrix& w, const Matrix& a) { return w * a; }
Matrix apply_layer_t(const RankRPoint& w, const Matrix& d) { return w.apply_transpose(d); }
Matrix apply_layer_t(const Matrix& w, const Matrix& d) { return w.transpose() * d; }
Index rows_of(const RankRPoint& w) { return w.rows(); }
Index rows_of(const Matrix& w) { return w.rows(); }
Index cols_of(const RankRPoint& w) { return w.cols(); }
Index cols_of(const Matrix& w) { return w.cols(); }

template <typename Layers>
void validate_layers(const Layers& layers, const std::vector<Vector>& biases) {
  if (layers.empty()) throw DimensionMismatch("model has no layers");
  if (biases.size() != layers.size()) {
    throw DimensionMismatch("model has " + std::to_string(layers.size()) + " layers but " +
                            std::to_string(biases.size()) + " bias vectors");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (biases[l].size() != rows_of(layers[l])) {
      throw DimensionMismatch("bias " + std::to_string(l) + " has length " +
                              std::to_string(biases[l].size()) + ", layer output is " +
                              std::to_string(rows_of(layers[l])));
    }
    if (l + 1 < layers.size() && rows_of(layers[l]) != cols_of(layers[l + 1])) {
      throw DimensionMismatch("layer " + std::to_string(l) + " output " +
                              std::to_string(rows_of(layers[l])) + " != layer " +
                              std::to_string(l + 1) + " input " +
                              std::to_string(cols_of(layers[l + 1])));
    }
  }
}

Matrix gather_columns(const Matrix& m, const MiniBatch& batch) {
  Matrix out(m.rows(), batch.size());
  for (Index j = 0; j < batch.size(); ++j) out.col(j) = m.col(batch.indices[j]);
  return out;
}

void check_batch(const Dataset& data, const MiniBatch& batch) {
  if (batch.indices.empty()) throw Error("empty mini-batch");
  for (Index i : batch.indices) {
    if (i < 0 || i >= data.size()) {
      throw DimensionMismatch("mini-batch index " + std::to_string(i) + " out of range");
    }
  }
}

void apply_activation(Activation act, Matrix& z) {
  if (act == Activation::kReLU) z = z.cwiseMax(0.0);
}

// Forward pass keeping every layer's pre-activation and input.
struct Trace {
  std::vector<Matrix> inputs;  // a_{l-1}
  std::vector<Matrix> pre;     // z_l
};

template <typename Model>
Matrix run_forward(const Model& model, const Matrix& x, Trace* trace) {
  if (x.rows() != model.input_dim()) {
    throw DimensionMismatch("input has length " + std::to_string(x.rows()) +
                            ", model expects " + std::to_string(model.input_dim()));
  }
  const std::size_t n = model.layers.size();
  Matrix a = x;
  for (std::size_t l = 0; l < n; ++l) {
    Matrix z = apply_layer(model.layers[l], a);
    z.colwise() += model.biases[l];
    if (trace) {
      trace->inputs.push_back(std::move(a));
      trace->pre.push_back(z);
    }
    if (l + 1 < n) apply_activation(model.hidden_activation, z);
    a = std::move(z);
  }
  return a;
}

// Mean loss over columns and (optionally) its gradient w.r.t. the outputs.
double output_loss(const Matrix& out, const Dataset& data, const MiniBatch& batch,
                   LossKind kind, Matrix* d_out) {
  const Index b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  if (!out.allFinite() || out.cwiseAbs().maxCoeff() > kMaxLogit) {
    throw NumericalOverflow("model output is not finite");
  }
  double total = 0.0;
  if (d_out) d_out->resize(out.rows(), out.cols());

  if (kind == LossKind::kLeastSquares) {
    for (Index j = 0; j < b; ++j) {
      const Vector r = out.col(j) - data.targets.col(batch.indices[j]);
      total += 0.5 * r.squaredNorm();
      if (d_out) d_out->col(j) = r * inv_b;
    }
  } else {
    for (Index j = 0; j < b; ++j) {
      const int label = data.labels[batch.indices[j]];
      const double m = out.col(j).maxCoeff();
      const Vector e = (out.col(j).array() - m).exp().matrix();
      const double s = e.sum();
      total += m + std::log(s) - out(label, j);
      if (d_out) {
        d_out->col(j) = e / s;
        (*d_out)(label, j) -= 1.0;
        d_out->col(j) *= inv_b;
      }
    }
  }
  const double mean = total * inv_b;
  if (!std::isfinite(mean)) throw NumericalOverflow("loss is not finite");
  return mean;
}

template <typename Model>
double model_loss(const Model& model, const Dataset& data, const MiniBatch& batch,
                  LossKind kind) {
  check_batch(data, batch);
  const Matrix out = run_forward(model, gather_columns(data.features, batch), nullptr);
  return output_loss(out, data, batch, kind, nullptr);
}

template <typename Model>
ModelGradient model_grad(const Model& model, const Dataset& data, const MiniBatch& batch,
                         LossKind kind) {
  check_batch(data, batch);
  Trace trace;
  const Matrix out = run_forward(model, gather_columns(data.features, batch), &trace);
  Matrix delta;
  output_loss(out, data, batch, kind, &delta);

  const std::size_t n = model.layers.size();
  ModelGradient g;
  g.weights.resize(n);
  g.biases.resize(n);
  for (std::size_t l = n; l-- > 0;) {
    g.weights[l] = delta * trace.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = apply_layer_t(model.layers[l], delta);
    if (model.hidden_activation == Activation::kReLU) {
      back = back.cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(back);
  }
  return g;
}

template <typename Model>
double model_accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw Error("accuracy: empty dataset");
  if (static_cast<Index>(data.labels.size()) != data.size()) {
    throw Error("accuracy: dataset has no class labels");
  }
  const Matrix out = run_forward(model, data.features, nullptr);
  Index correct = 0;
  for (Index j = 0; j < out.cols(); ++j) {
    Index arg = 0;
    out.col(j).maxCoeff(&arg);
    if (arg == data.labels[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Matrix gaussian_matrix(Index rows, Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

Dataset select(const Dataset& data, const std::vector<Index>& idx) {
  Dataset out;
  out.device_id = data.device_id;
  out.features.resize(data.features.rows(), static_cast<Index>(idx.size()));
  if (data.targets.cols() > 0) out.targets.resize(data.targets.rows(), out.features.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Index src = idx[j];
    out.features.col(static_cast<Index>(j)) = data.features.col(src);
    if (!data.labels.empty()) out.labels.push_back(data.labels[src]);
    if (data.targets.cols() > 0) out.targets.col(static_cast<Index>(j)) = data.targets.col(src);
  }
  return out;
}

}  // namespace

void Dataset::validate(LossKind kind, Index num_outputs) const {
  if (size() == 0) throw Error("dataset " + std::to_string(device_id) + " is empty");
  if (!features.allFinite()) throw Error("dataset features contain NaN/Inf");
  if (kind == LossKind::kCrossEntropy) {
    if (static_cast<Index>(labels.size()) != size()) {
      throw DimensionMismatch("dataset has " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(size()) + " samples");
    }
    for (int label : labels) {
      if (label < 0 || label >= num_outputs) {
        throw DimensionMismatch("class index " + std::to_string(label) + " not below " +
                                std::to_string(num_outputs));
      }
    }
  } else {
    if (targets.cols() != size() || targets.rows() != num_outputs) {
      throw DimensionMismatch("regression targets must be " + std::to_string(num_outputs) +
                              "x" + std::to_string(size()));
    }
  }
}

void LowRankModel::validate() const { validate_layers(layers, biases); }
void DenseModel::validate() const { validate_layers(layers, biases); }

void Architecture::validate() const {
  if (widths.size() < 2 || ranks.size() + 1 != widths.size()) {
    throw DimensionMismatch("architecture needs one rank per weight matrix");
  }
  for (std::size_t l = 0; l < ranks.size(); ++l) {
    const Index m = widths[l + 1];
    const Index n = widths[l];
    if (m < 1 || n < 1 || ranks[l] < 1 || ranks[l] > std::min(m, n)) {
      throw DimensionMismatch("layer " + std::to_string(l) + ": rank " +
                              std::to_string(ranks[l]) + " invalid for " +
                              std::to_string(m) + "x" + std::to_string(n));
    }
  }
}

Matrix forward(const LowRankModel& model, const Matrix& inputs) {
  return run_forward(model, inputs, nullptr);
}
Matrix forward(const DenseModel& model, const Matrix& inputs) {
  return run_forward(model, inputs, nullptr);
}
Vector forward(const LowRankModel& model, const Vector& x) {
  return run_forward(model, Matrix(x), nullptr).col(0);
}

double loss(const LowRankModel& model, const Dataset& data, const MiniBatch& batch,
            LossKind kind) {
  return model_loss(model, data, batch, kind);
}
double loss(const DenseModel& model, const Dataset& data, const MiniBatch& batch,
            LossKind kind) {
  return model_loss(model, data, batch, kind);
}
double loss(const LowRankModel& model, const Dataset& data, LossKind kind) {
  return model_loss(model, data, full_batch(data), kind);
}
double loss(const DenseModel& model, const Dataset& data, LossKind kind) {
  return model_loss(model, data, full_batch(data), kind);
}

ModelGradient euclid_grad(const LowRankModel& model, const Dataset& data,
                          const MiniBatch& batch, LossKind kind) {
  return model_grad(model, data, batch, kind);
}
ModelGradient euclid_grad(const DenseModel& model, const Dataset& data, const MiniBatch& batch,
                          LossKind kind) {
  return model_grad(model, data, batch, kind);
}
ModelGradient euclid_grad(const LowRankModel& model, const Dataset& data, LossKind kind) {
  return model_grad(model, data, full_batch(data), kind);
}

ModelGradient penalized_euclid_grad(const LowRankModel& model_k, const LowRankModel& theta0,
                                    const Dataset& data, const MiniBatch& batch, double mu,
                                    int num_devices, LossKind kind) {
  if (model_k.layers.size() != theta0.layers.size()) {
    throw DimensionMismatch("penalized_euclid_grad: layer counts differ");
  }
  for (std::size_t l = 0; l < model_k.layers.size(); ++l) {
    if (model_k.layers[l].rows() != theta0.layers[l].rows() ||
        model_k.layers[l].cols() != theta0.layers[l].cols()) {
      throw DimensionMismatch("penalized_euclid_grad: layer " + std::to_string(l) +
                              " shapes differ");
    }
  }
  if (num_devices < 1) throw Error("penalized_euclid_grad: K must be >= 1");
  const double inv_k = 1.0 / static_cast<double>(num_devices);

  ModelGradient g = model_grad(model_k, data, batch, kind);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    g.weights[l] *= inv_k;
    if (mu != 0.0) {
      g.weights[l] +=
          (mu * inv_k) * (model_k.layers[l].ambient() - theta0.layers[l].ambient());
    }
    g.biases[l] *= inv_k;
  }
  return g;
}

double accuracy(const LowRankModel& model, const Dataset& data) {
  return model_accuracy(model, data);
}
double accuracy(const DenseModel& model, const Dataset& data) {
  return model_accuracy(model, data);
}

MiniBatch sample_minibatch(const Dataset& data, Index batch_size, Rng& rng) {
  if (batch_size < 1) throw Error("mini-batch size must be >= 1");
  if (batch_size > data.size()) {
    throw BatchTooLarge("mini-batch of " + std::to_string(batch_size) + " from " +
                        std::to_string(data.size()) + " samples");
  }
  std::vector<Index> all(static_cast<std::size_t>(data.size()));
  std::iota(all.begin(), all.end(), Index{0});
  MiniBatch batch;
  batch.indices.reserve(static_cast<std::size_t>(batch_size));
  std::sample(all.begin(), all.end(), std::back_inserter(batch.indices), batch_size, rng);
  return batch;
}

MiniBatch full_batch(const Dataset& data) {
  MiniBatch batch;
  batch.indices.resize(static_cast<std::size_t>(data.size()));
  std::iota(batch.indices.begin(), batch.indices.end(), Index{0});
  return batch;
}

LowRankModel init_low_rank_model(const Architecture& arch, Rng& rng) {
  arch.validate();
  LowRankModel model;
  model.hidden_activation = arch.hidden_activation;
  model.train_biases = arch.train_biases;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const Index m = arch.widths[l + 1];
    const Index n = arch.widths[l];
    const Matrix g = gaussian_matrix(m, n, std::sqrt(2.0 / static_cast<double>(n)), rng);
    model.layers.push_back(manifold::svd_truncate(g, arch.ranks[l]));
    model.biases.push_back(Vector::Zero(m));
  }
  return model;
}

DenseModel init_dense_model(const Architecture& arch, Rng& rng) {
  arch.validate();
  DenseModel model;
  model.hidden_activation = arch.hidden_activation;
  model.train_biases = arch.train_biases;
  for (Index l = 0; l < arch.num_layers(); ++l) {
    const Index m = arch.widths[l + 1];
    const Index n = arch.widths[l];
    model.layers.push_back(gaussian_matrix(m, n, std::sqrt(2.0 / static_cast<double>(n)), rng));
    model.biases.push_back(Vector::Zero(m));
  }
  return model;
}

PlantedTask make_planted_dataset(Index rows, Index cols, Index rank_true, int num_devices,
                                 Index samples_per_device, double noise_sd, Rng& rng) {
  if (rows < 1 || cols < 1 || rank_true < 1 || rank_true > std::min(rows, cols)) {
    throw DimensionMismatch("make_planted_dataset: invalid rank");
  }
  if (num_devices < 1 || samples_per_device < 1 || noise_sd < 0.0) {
    throw Error("make_planted_dataset: need K >= 1, samples >= 1, noise_sd >= 0");
  }
  PlantedTask task;
  const Matrix a = gaussian_matrix(rows, rank_true, 1.0, rng);
  const Matrix b = gaussian_matrix(cols, rank_true, 1.0, rng);
  task.w_star = a * b.transpose() / std::sqrt(static_cast<double>(rank_true));

  auto make_set = [&](Index n, int id) {
    Dataset d;
    d.device_id = id;
    d.features = gaussian_matrix(cols, n, 1.0, rng);
    d.targets = task.w_star * d.features;
    if (noise_sd > 0.0) d.targets += gaussian_matrix(rows, n, noise_sd, rng);
    return d;
  };
  for (int k = 0; k < num_devices; ++k) task.shards.push_back(make_set(samples_per_device, k));
  task.test = make_set(samples_per_device, -1);
  return task;
}

std::vector<Dataset> shard_uniform(const Dataset& data, int num_devices, Rng& rng) {
  if (num_devices < 1) throw Error("shard_uniform: need at least one device");
  const Index per = data.size() / num_devices;
  if (per < 1) throw Error("shard_uniform: fewer samples than devices");
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Dataset> shards;
  for (int k = 0; k < num_devices; ++k) {
    std::vector<Index> idx(order.begin() + k * per, order.begin() + (k + 1) * per);
    Dataset s = select(data, idx);
    s.device_id = k;
    shards.push_back(std::move(s));
  }
  return shards;
}

Dataset concatenate(const std::vector<Dataset>& shards) {
  if (shards.empty()) throw Error("concatenate: no shards");
  Index total = 0;
  for (const auto& s : shards) total += s.size();
  Dataset out;
  out.device_id = -1;
  out.features.resize(shards.front().features.rows(), total);
  const bool has_targets = shards.front().targets.cols() > 0;
  if (has_targets) out.targets.resize(shards.front().targets.rows(), total);
  Index at = 0;
  for (const auto& s : shards) {
    out.features.middleCols(at, s.size()) = s.features;
    if (has_targets) out.targets.middleCols(at, s.size()) = s.targets;
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    at += s.size();
  }
  return out;
}

}  // namespace fedrlr
