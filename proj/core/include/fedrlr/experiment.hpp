#pragma once

// Experiment plumbing shared by the command line runner and the acceptance
// suite: JSON run configuration, task construction, CSV/JSON metric files.
//
// Config schema (every key optional, unknown keys rejected):
//
//   task                 "mnist_mlp" | "planted_ls"
//   seed                 unsigned integer
//   rounds, num_devices, batch_size, record_every, max_step_halvings
//   learning_rate        { schedule: "harmonic" | "constant", q, nu }
//   penalty              { schedule: "scheduled" | "constant", c1, mu }
//   channel              { policy: "channel_inversion" | "gbma" | "error_free",
//                          h_min, noise_variance, snr_db (null = fixed gamma), gamma }
//   model                { hidden: [..], ranks: [..], activation: "relu" | "identity",
//                          train_biases }
//   planted              { rows, cols, rank, samples_per_device, noise_sd }
//   mnist                { train_images, train_labels, test_images, test_labels,
//                          train_limit, test_limit }   (limit 0 = whole file)
//   output               { dir, csv, target_accuracy, benchmark_csv }
//
// A single entry in model.ranks applies to every layer. The model section only
// shapes the MLP; a planted task is a single matrix fitted at planted.rank.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedrlr/diagnostics.hpp"
#include "fedrlr/federation.hpp"

namespace fedrlr::experiment {

enum class TaskKind { kMnistMlp, kPlantedLs };

struct PlantedSpec {
  Index rows = 20;
  Index cols = 30;
  Index rank = 2;
  Index samples_per_device = 200;
  double noise_sd = 0.0;
};

struct MnistSpec {
  std::string train_images = "data/mnist/train-images-idx3-ubyte";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte";
  Index train_limit = 0;
  Index test_limit = 0;
};

struct ModelSpec {
  std::vector<Index> hidden = {256, 256};
  std::vector<Index> ranks = {4};
  Activation activation = Activation::kReLU;
  bool train_biases = true;
};

struct OutputSpec {
  std::string dir = "out";
  bool csv = true;
  double target_accuracy = 0.7;
  std::string benchmark_csv;  // FedAvg CSV for the overhead ratio, optional
};

struct RunConfig {
  TaskKind task = TaskKind::kMnistMlp;
  federation::FedConfig fed;
  ModelSpec model;
  PlantedSpec planted;
  MnistSpec mnist;
  OutputSpec output;
};

/// Parses JSON text. `overrides` are "dotted.key=value" strings applied
/// before validation; the value is read as JSON when it parses, otherwise as
/// a string. Throws SchemaError naming the offending key.
RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});

/// Reads and parses a file. Throws IngestError if it cannot be read.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});

/// Canonical form: every key present, sorted, two-space indent.
std::string serialize(const RunConfig& cfg);

/// `output.dir`, unless FEDRLR_OUTPUT_DIR is set and non-empty.
std::filesystem::path output_dir(const RunConfig& cfg);

struct BuiltTask {
  federation::Task task;
  std::optional<Matrix> w_star;  // planted ground truth
};

/// Loads or synthesizes the data and fixes the architecture. Throws
/// IngestError for unreadable data files.
BuiltTask build_task(const RunConfig& cfg);

/// Fixed column order: t, train_loss, test_accuracy, consensus_gap,
/// stationarity_norm, rank_0 .. rank_{L-1}, cumulative_symbols, p_ave,
/// test_loss.
std::string csv_header(std::size_t num_layers);
std::string csv_row(const federation::RoundRecord& rec);

/// Reads (accuracy, cumulative_symbols) back from a metrics CSV.
std::vector<diagnostics::AccuracyPoint> read_accuracy_curve(const std::filesystem::path& csv);

enum class Method { kFedRlr, kFedAvg };

struct RunOutcome {
  std::vector<federation::RoundRecord> records;
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  std::string summary_json;
  /// Planted tasks: ||W - P_R(W*)||_F / ||W*||_F for FedRLR,
  /// ||W - W*||_F / ||W*||_F for FedAvg.
  std::optional<double> relative_error;
};

/// Runs one method end to end. Metrics go to `<dir>/<method>.csv` and
/// `<dir>/<method>_summary.json`; the CSV is written to a temporary name and
/// renamed on success. Nothing is written when task construction fails.
RunOutcome run_experiment(const RunConfig& cfg, Method method, const std::filesystem::path& dir);

}  // namespace fedrlr::experiment
