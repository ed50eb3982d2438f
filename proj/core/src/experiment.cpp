#include "fedrlr/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedrlr/errors.hpp"
#include "fedrlr/mnist.hpp"

namespace fedrlr::experiment {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const json& empty_object() {
  static const json kEmpty = json::object();
  return kEmpty;
}

// Strict view of one JSON object: every key read is remembered, and finish()
// rejects whatever was not.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string path_of(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  double number(std::string_view key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) throw SchemaError(path_of(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw SchemaError(path_of(key), "must be finite");
    return x;
  }

  std::optional<double> nullable_number(std::string_view key, std::optional<double> def) {
    const json* v = find(key);
    if (!v) return def;
    if (v->is_null()) return std::nullopt;
    return number(key, 0.0);
  }

  std::int64_t integer(std::string_view key, std::int64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw SchemaError(path_of(key), "expected an integer");
    if (v->is_number_unsigned() &&
        v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw SchemaError(path_of(key), "out of range");
    }
    return v->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(std::string_view key, std::uint64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) throw SchemaError(path_of(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(std::string_view key, bool def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) throw SchemaError(path_of(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(std::string_view key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) throw SchemaError(path_of(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<Index> index_list(std::string_view key, const std::vector<Index>& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) throw SchemaError(path_of(key), "expected an array of integers");
    std::vector<Index> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      const std::string p = path_of(key) + "[" + std::to_string(i) + "]";
      if (!e.is_number_integer()) throw SchemaError(p, "expected an integer");
      if (e.get<std::int64_t>() < 1) throw SchemaError(p, "must be >= 1");
      out.push_back(static_cast<Index>(e.get<std::int64_t>()));
    }
    return out;
  }

  Section child(std::string_view key) {
    const json* v = find(key);
    return Section(v ? *v : empty_object(), path_of(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw SchemaError(path_of(item.key()), "unknown key");
    }
  }

 private:
  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E choose(const std::string& value, const std::string& path,
         std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    names += names.empty() ? "" : ", ";
    names += name;
  }
  throw SchemaError(path, "'" + value + "' is not one of " + names);
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw SchemaError(path, what);
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw SchemaError(assignment, "override must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw SchemaError(key, "empty key component");
    if (!node->is_object()) throw SchemaError(key.substr(0, start ? start - 1 : 0), "expected an object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

const char* task_name(TaskKind k) { return k == TaskKind::kPlantedLs ? "planted_ls" : "mnist_mlp"; }

const char* policy_name(airlink::PowerPolicy::Kind k) {
  switch (k) {
    case airlink::PowerPolicy::Kind::kGbmaPhaseAlign: return "gbma";
    case airlink::PowerPolicy::Kind::kChannelInversion: return "channel_inversion";
    case airlink::PowerPolicy::Kind::kErrorFree: return "error_free";
  }
  return "?";
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Architecture make_architecture(const RunConfig& cfg, Index input_dim, Index output_dim) {
  Architecture arch;
  arch.widths.push_back(input_dim);
  if (cfg.task == TaskKind::kMnistMlp) {
    for (Index h : cfg.model.hidden) arch.widths.push_back(h);
    arch.hidden_activation = cfg.model.activation;
    arch.train_biases = cfg.model.train_biases;
  } else {
    arch.hidden_activation = Activation::kIdentity;
    arch.train_biases = false;
  }
  arch.widths.push_back(output_dim);
  const std::size_t layers = arch.widths.size() - 1;
  if (cfg.task == TaskKind::kPlantedLs) {
    arch.ranks.assign(layers, cfg.planted.rank);
  } else if (cfg.model.ranks.size() == 1) {
    arch.ranks.assign(layers, cfg.model.ranks.front());
  } else if (cfg.model.ranks.size() == layers) {
    arch.ranks = cfg.model.ranks;
  } else {
    throw SchemaError("model.ranks", "need one rank or one per layer (" + std::to_string(layers) +
                                         ")");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (arch.ranks[l] > std::min(arch.widths[l], arch.widths[l + 1])) {
      throw SchemaError("model.ranks[" + std::to_string(cfg.model.ranks.size() == 1 ? 0 : l) + "]",
                        "rank exceeds the layer dimensions " + std::to_string(arch.widths[l + 1]) +
                            " x " + std::to_string(arch.widths[l]));
    }
  }
  return arch;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  json root;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
    }
  }
  if (!root.is_object()) throw SchemaError("<root>", "expected an object");
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig cfg;
  auto& fed = cfg.fed;
  Section top(root, "");

  cfg.task = choose<TaskKind>(top.string("task", task_name(cfg.task)), "task",
                              {{"mnist_mlp", TaskKind::kMnistMlp},
                               {"planted_ls", TaskKind::kPlantedLs}});
  fed.seed = top.unsigned_integer("seed", fed.seed);
  fed.rounds = top.integer("rounds", fed.rounds);
  require(fed.rounds >= 1, "rounds", "must be >= 1");
  fed.num_devices = static_cast<int>(top.integer("num_devices", fed.num_devices));
  require(fed.num_devices >= 1 && fed.num_devices <= 100000, "num_devices", "must be in [1, 100000]");
  fed.batch_size = top.integer("batch_size", fed.batch_size);
  require(fed.batch_size >= 1, "batch_size", "must be >= 1");
  fed.record_every = top.integer("record_every", fed.record_every);
  require(fed.record_every >= 1, "record_every", "must be >= 1");
  fed.max_step_halvings = static_cast<int>(top.integer("max_step_halvings", fed.max_step_halvings));
  require(fed.max_step_halvings >= 0 && fed.max_step_halvings <= 60, "max_step_halvings",
          "must be in [0, 60]");

  {
    Section s = top.child("learning_rate");
    fed.lr.kind = choose<schedule::LrSchedule::Kind>(
        s.string("schedule", "harmonic"), s.path_of("schedule"),
        {{"harmonic", schedule::LrSchedule::Kind::kHarmonic},
         {"constant", schedule::LrSchedule::Kind::kConstant}});
    fed.lr.q = s.number("q", fed.lr.q);
    require(fed.lr.q > 0.0, s.path_of("q"), "must be > 0");
    fed.lr.nu = s.number("nu", fed.lr.nu);
    require(fed.lr.nu > 0.0, s.path_of("nu"), "must be > 0");
    s.finish();
  }
  {
    Section s = top.child("penalty");
    fed.penalty.kind = choose<schedule::PenaltySchedule::Kind>(
        s.string("schedule", "scheduled"), s.path_of("schedule"),
        {{"scheduled", schedule::PenaltySchedule::Kind::kScheduled},
         {"constant", schedule::PenaltySchedule::Kind::kConstant}});
    fed.penalty.c1 = s.number("c1", fed.penalty.c1);
    require(fed.penalty.c1 > 0.0 && fed.penalty.c1 < 1.0, s.path_of("c1"),
            "must lie in the open interval (0, 1)");
    // Constant mu defaults to the scheduled value at t = 0.
    const auto mu = s.nullable_number("mu", std::nullopt);
    fed.penalty.mu = mu ? *mu : fed.penalty.c1 / schedule::eta(fed.lr, 0);
    require(fed.penalty.mu >= 0.0, s.path_of("mu"), "must be >= 0");
    s.finish();
  }
  {
    Section s = top.child("channel");
    fed.policy.kind = choose<airlink::PowerPolicy::Kind>(
        s.string("policy", policy_name(fed.policy.kind)), s.path_of("policy"),
        {{"channel_inversion", airlink::PowerPolicy::Kind::kChannelInversion},
         {"gbma", airlink::PowerPolicy::Kind::kGbmaPhaseAlign},
         {"error_free", airlink::PowerPolicy::Kind::kErrorFree}});
    fed.policy.h_min = s.number("h_min", fed.policy.h_min);
    require(fed.policy.h_min >= 0.0, s.path_of("h_min"), "must be >= 0");
    fed.sigma_z2 = s.number("noise_variance", fed.sigma_z2);
    require(fed.sigma_z2 >= 0.0, s.path_of("noise_variance"), "must be >= 0");
    fed.snr_db = s.nullable_number("snr_db", fed.snr_db);
    fed.gamma = s.number("gamma", fed.gamma);
    require(fed.gamma > 0.0, s.path_of("gamma"), "must be > 0");
    if (fed.snr_db) {
      require(fed.sigma_z2 > 0.0, s.path_of("noise_variance"),
              "must be > 0 when snr_db sets the transmit power");
    }
    s.finish();
  }
  {
    Section s = top.child("model");
    cfg.model.hidden = s.index_list("hidden", cfg.model.hidden);
    cfg.model.ranks = s.index_list("ranks", cfg.model.ranks);
    require(!cfg.model.ranks.empty(), s.path_of("ranks"), "must not be empty");
    cfg.model.activation = choose<Activation>(s.string("activation", "relu"), s.path_of("activation"),
                                              {{"relu", Activation::kReLU},
                                               {"identity", Activation::kIdentity}});
    cfg.model.train_biases = s.boolean("train_biases", cfg.model.train_biases);
    s.finish();
  }
  {
    Section s = top.child("planted");
    auto& p = cfg.planted;
    p.rows = s.integer("rows", p.rows);
    require(p.rows >= 1, s.path_of("rows"), "must be >= 1");
    p.cols = s.integer("cols", p.cols);
    require(p.cols >= 1, s.path_of("cols"), "must be >= 1");
    p.rank = s.integer("rank", p.rank);
    require(p.rank >= 1 && p.rank <= std::min(p.rows, p.cols), s.path_of("rank"),
            "must be in [1, min(rows, cols)]");
    p.samples_per_device = s.integer("samples_per_device", p.samples_per_device);
    require(p.samples_per_device >= 1, s.path_of("samples_per_device"), "must be >= 1");
    p.noise_sd = s.number("noise_sd", p.noise_sd);
    require(p.noise_sd >= 0.0, s.path_of("noise_sd"), "must be >= 0");
    s.finish();
  }
  {
    Section s = top.child("mnist");
    auto& m = cfg.mnist;
    m.train_images = s.string("train_images", m.train_images);
    m.train_labels = s.string("train_labels", m.train_labels);
    m.test_images = s.string("test_images", m.test_images);
    m.test_labels = s.string("test_labels", m.test_labels);
    m.train_limit = s.integer("train_limit", m.train_limit);
    require(m.train_limit >= 0, s.path_of("train_limit"), "must be >= 0");
    m.test_limit = s.integer("test_limit", m.test_limit);
    require(m.test_limit >= 0, s.path_of("test_limit"), "must be >= 0");
    s.finish();
  }
  {
    Section s = top.child("output");
    auto& o = cfg.output;
    o.dir = s.string("dir", o.dir);
    require(!o.dir.empty(), s.path_of("dir"), "must not be empty");
    o.csv = s.boolean("csv", o.csv);
    o.target_accuracy = s.number("target_accuracy", o.target_accuracy);
    require(o.target_accuracy >= 0.0 && o.target_accuracy <= 1.0, s.path_of("target_accuracy"),
            "must be in [0, 1]");
    o.benchmark_csv = s.string("benchmark_csv", o.benchmark_csv);
    s.finish();
  }
  top.finish();

  if (cfg.task == TaskKind::kPlantedLs && cfg.planted.samples_per_device < fed.batch_size) {
    throw SchemaError("batch_size", "exceeds planted.samples_per_device");
  }
  return cfg;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

std::string serialize(const RunConfig& cfg) {
  const auto& fed = cfg.fed;
  json j;
  j["task"] = task_name(cfg.task);
  j["seed"] = fed.seed;
  j["rounds"] = fed.rounds;
  j["num_devices"] = fed.num_devices;
  j["batch_size"] = fed.batch_size;
  j["record_every"] = fed.record_every;
  j["max_step_halvings"] = fed.max_step_halvings;
  j["learning_rate"] = {
      {"schedule", fed.lr.kind == schedule::LrSchedule::Kind::kHarmonic ? "harmonic" : "constant"},
      {"q", fed.lr.q},
      {"nu", fed.lr.nu}};
  j["penalty"] = {{"schedule", fed.penalty.kind == schedule::PenaltySchedule::Kind::kScheduled
                                   ? "scheduled"
                                   : "constant"},
                  {"c1", fed.penalty.c1},
                  {"mu", fed.penalty.mu}};
  j["channel"] = {{"policy", policy_name(fed.policy.kind)},
                  {"h_min", fed.policy.h_min},
                  {"noise_variance", fed.sigma_z2},
                  {"snr_db", fed.snr_db ? json(*fed.snr_db) : json(nullptr)},
                  {"gamma", fed.gamma}};
  j["model"] = {{"hidden", cfg.model.hidden},
                {"ranks", cfg.model.ranks},
                {"activation", cfg.model.activation == Activation::kReLU ? "relu" : "identity"},
                {"train_biases", cfg.model.train_biases}};
  j["planted"] = {{"rows", cfg.planted.rows},
                  {"cols", cfg.planted.cols},
                  {"rank", cfg.planted.rank},
                  {"samples_per_device", cfg.planted.samples_per_device},
                  {"noise_sd", cfg.planted.noise_sd}};
  j["mnist"] = {{"train_images", cfg.mnist.train_images},
                {"train_labels", cfg.mnist.train_labels},
                {"test_images", cfg.mnist.test_images},
                {"test_labels", cfg.mnist.test_labels},
                {"train_limit", cfg.mnist.train_limit},
                {"test_limit", cfg.mnist.test_limit}};
  j["output"] = {{"dir", cfg.output.dir},
                 {"csv", cfg.output.csv},
                 {"target_accuracy", cfg.output.target_accuracy},
                 {"benchmark_csv", cfg.output.benchmark_csv}};
  return j.dump(2) + "\n";
}

fs::path output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("FEDRLR_OUTPUT_DIR"); env && *env) return fs::path(env);
  return fs::path(cfg.output.dir);
}

BuiltTask build_task(const RunConfig& cfg) {
  BuiltTask out;
  federation::Task& task = out.task;
  const int k = cfg.fed.num_devices;
  if (cfg.task == TaskKind::kPlantedLs) {
    const auto& p = cfg.planted;
    Rng rng = make_stream(cfg.fed.seed, Stream::kPlantedTask);
    PlantedTask planted =
        make_planted_dataset(p.rows, p.cols, p.rank, k, p.samples_per_device, p.noise_sd, rng);
    task.kind = LossKind::kLeastSquares;
    task.arch = make_architecture(cfg, p.cols, p.rows);
    task.shards = std::move(planted.shards);
    task.test = std::move(planted.test);
    out.w_star = std::move(planted.w_star);
  } else {
    const auto& m = cfg.mnist;
    Dataset train = mnist::load(m.train_images, m.train_labels, m.train_limit);
    Dataset test = mnist::load(m.test_images, m.test_labels, m.test_limit);
    if (train.size() / k < cfg.fed.batch_size) {
      throw SchemaError("batch_size", "exceeds the per-device shard size " +
                                          std::to_string(train.size() / k));
    }
    Rng rng = make_stream(cfg.fed.seed, Stream::kDataShard);
    task.kind = LossKind::kCrossEntropy;
    task.arch = make_architecture(cfg, train.input_dim(), 10);
    task.shards = shard_uniform(train, k, rng);
    test.device_id = -1;
    task.test = std::move(test);
  }
  task.validate(k);
  return out;
}

std::string csv_header(std::size_t num_layers) {
  std::string h = "t,train_loss,test_accuracy,consensus_gap,stationarity_norm";
  for (std::size_t l = 0; l < num_layers; ++l) h += ",rank_" + std::to_string(l);
  h += ",cumulative_symbols,p_ave,test_loss\n";
  return h;
}

std::string csv_row(const federation::RoundRecord& rec) {
  std::string r = std::to_string(rec.round);
  for (double x : {rec.train_loss, rec.test_accuracy, rec.consensus_gap, rec.stationarity_norm}) {
    r += ',';
    r += format_double(x);
  }
  for (Index rank : rec.ranks) r += "," + std::to_string(rank);
  r += "," + std::to_string(rec.cumulative_symbols);
  r += "," + format_double(rec.p_ave);
  r += "," + format_double(rec.test_loss);
  r += '\n';
  return r;
}

std::vector<diagnostics::AccuracyPoint> read_accuracy_curve(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IngestError("cannot read metrics " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestError(csv.string() + ": empty file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return i;
    throw IngestError(csv.string() + ": no column " + name);
  };
  const std::size_t acc_col = col("test_accuracy");
  const std::size_t sym_col = col("cumulative_symbols");

  std::vector<diagnostics::AccuracyPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) throw IngestError(csv.string() + ": ragged row");
    diagnostics::AccuracyPoint p;
    try {
      p.accuracy = f[acc_col] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                       : std::stod(f[acc_col]);
      p.cumulative_symbols = std::stoll(f[sym_col]);
    } catch (const std::exception&) {
      throw IngestError(csv.string() + ": unparsable row '" + line + "'");
    }
    out.push_back(p);
  }
  return out;
}

RunOutcome run_experiment(const RunConfig& cfg, Method method, const fs::path& dir) {
  const BuiltTask built = build_task(cfg);
  const federation::Task& task = built.task;
  const std::string name = method == Method::kFedRlr ? "fedrlr" : "fedavg";

  fs::create_directories(dir);
  RunOutcome outcome;
  outcome.csv_path = dir / (name + ".csv");
  outcome.summary_path = dir / (name + "_summary.json");
  const fs::path tmp_csv = fs::path(outcome.csv_path).concat(".tmp");

  std::ofstream csv;
  if (cfg.output.csv) {
    csv.open(tmp_csv, std::ios::binary | std::ios::trunc);
    if (!csv) throw Error("cannot write " + tmp_csv.string());
    csv << csv_header(static_cast<std::size_t>(task.arch.num_layers()));
  }
  const federation::RecordSink sink = [&](const federation::RoundRecord& rec) {
    if (cfg.output.csv) csv << csv_row(rec);
  };

  json summary;
  try {
    if (method == Method::kFedRlr) {
      federation::TrainingResult res = federation::run_training(task, cfg.fed, sink);
      outcome.records = std::move(res.records);
      summary["step_halvings"] = res.step_halvings;
      summary["failed_aggregations"] = res.failed_aggregations;
      if (built.w_star) {
        const Matrix& w = *built.w_star;
        const Matrix target = manifold::svd_truncate(w, res.server.model.layers[0].rank()).ambient();
        outcome.relative_error =
            (res.server.model.layers[0].ambient() - target).norm() / w.norm();
      }
    } else {
      federation::FedAvgResult res = federation::run_fedavg_baseline(task, cfg.fed, sink);
      outcome.records = std::move(res.records);
      if (built.w_star) {
        const Matrix& w = *built.w_star;
        outcome.relative_error = (res.model.layers[0] - w).norm() / w.norm();
      }
    }
  } catch (...) {
    if (csv.is_open()) csv.close();
    std::error_code ec;
    fs::remove(tmp_csv, ec);
    throw;
  }
  if (cfg.output.csv) {
    csv.close();
    if (!csv) throw Error("write failed: " + tmp_csv.string());
    fs::rename(tmp_csv, outcome.csv_path);
  }

  const auto& last = outcome.records.back();
  const std::int64_t ours = diagnostics::fedrlr_symbols_per_round(task.arch);
  const std::int64_t dense = diagnostics::fedavg_symbols_per_round(task.arch, cfg.fed.num_devices);
  summary["method"] = name;
  summary["rounds"] = last.round;
  summary["final_train_loss"] = nullable(last.train_loss);
  summary["final_test_loss"] = nullable(last.test_loss);
  summary["final_accuracy"] = nullable(last.test_accuracy);
  summary["final_consensus_gap"] = nullable(last.consensus_gap);
  summary["final_stationarity_norm"] = nullable(last.stationarity_norm);
  summary["final_ranks"] = last.ranks;
  summary["cumulative_symbols"] = last.cumulative_symbols;
  summary["symbols_per_round"] = method == Method::kFedRlr ? ours : dense;
  summary["uplink_ratio_vs_fedavg"] = static_cast<double>(ours) / static_cast<double>(dense);
  summary["relative_error"] = outcome.relative_error ? json(*outcome.relative_error) : json(nullptr);
  summary["target_accuracy"] = cfg.output.target_accuracy;
  summary["rounds_to_target"] = nullptr;
  for (const auto& rec : outcome.records) {
    if (std::isfinite(rec.test_accuracy) && rec.test_accuracy >= cfg.output.target_accuracy) {
      summary["rounds_to_target"] = rec.round;
      break;
    }
  }
  summary["overhead_ratio"] = nullptr;
  if (method == Method::kFedRlr && !cfg.output.benchmark_csv.empty()) {
    const auto bench = read_accuracy_curve(cfg.output.benchmark_csv);
    std::vector<diagnostics::AccuracyPoint> mine;
    for (const auto& rec : outcome.records) mine.push_back({rec.test_accuracy, rec.cumulative_symbols});
    try {
      summary["overhead_ratio"] =
          diagnostics::comm_overhead_ratio(mine, bench, cfg.output.target_accuracy);
    } catch (const TargetNotReached& e) {
      summary["overhead_ratio_note"] = e.what();
    }
  }
  summary["config"] = json::parse(serialize(cfg));
  outcome.summary_json = summary.dump(2) + "\n";
  write_atomically(outcome.summary_path, outcome.summary_json);
  return outcome;
}

}  // namespace fedrlr::experiment
