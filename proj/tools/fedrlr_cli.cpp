// fedrlr: run federated low-rank training experiments from a JSON config.
//
//   fedrlr run <config> [--set key=value]... [--out dir] [--quiet]
//   fedrlr fedavg <config> [...]
//   fedrlr validate <config> [--set key=value]...
//
// Exit codes: 0 ok, 1 usage, 2 config rejected, 3 data/config unreadable,
// 4 runtime failure.

#include <cmath>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "fedrlr/errors.hpp"
#include "fedrlr/experiment.hpp"
#include "fedrlr/schedule.hpp"

namespace {

namespace ex = fedrlr::experiment;

enum ExitCode { kOk = 0, kUsage = 1, kSchema = 2, kIngest = 3, kRuntime = 4 };

struct Args {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Args& args, bool with_output) {
  cmd->add_option("config", args.config, "JSON config file")->required();
  cmd->add_option("--set", args.overrides, "override a config key, e.g. --set channel.snr_db=20");
  if (with_output) {
    cmd->add_option("--out", args.out, "output directory (beats FEDRLR_OUTPUT_DIR and output.dir)");
    cmd->add_flag("-q,--quiet", args.quiet, "no per-record progress");
  }
}

int validate(const Args& args) {
  const ex::RunConfig cfg = ex::load_config(args.config, args.overrides);
  std::cout << ex::serialize(cfg);
  const auto report =
      fedrlr::schedule::validate_schedules(cfg.fed.lr, cfg.fed.penalty, cfg.fed.rounds);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return kOk;
}

int run(const Args& args, ex::Method method) {
  ex::RunConfig cfg = ex::load_config(args.config, args.overrides);
  const auto dir = args.out.empty() ? ex::output_dir(cfg) : std::filesystem::path(args.out);
  const auto outcome = ex::run_experiment(cfg, method, dir);
  if (!args.quiet) {
    for (const auto& rec : outcome.records) {
      std::fprintf(stderr, "t=%-6ld loss=%.5g acc=%.4f gap=%.3g stat=%.3g\n", rec.round,
                   rec.train_loss, rec.test_accuracy, rec.consensus_gap, rec.stationarity_norm);
    }
  }
  if (cfg.output.csv) std::cerr << "metrics: " << outcome.csv_path.string() << "\n";
  std::cerr << "summary: " << outcome.summary_path.string() << "\n";
  std::cout << outcome.summary_json;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated low-rank training over a simulated wireless uplink"};
  app.require_subcommand(1);
  Args args;
  auto* run_cmd = app.add_subcommand("run", "train with over-the-air low-rank aggregation");
  add_common(run_cmd, args, true);
  auto* avg_cmd = app.add_subcommand("fedavg", "train the dense error-free FedAvg reference");
  add_common(avg_cmd, args, true);
  auto* val_cmd = app.add_subcommand("validate", "check a config and print its canonical form");
  add_common(val_cmd, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*val_cmd) return validate(args);
    if (*avg_cmd) return run(args, ex::Method::kFedAvg);
    return run(args, ex::Method::kFedRlr);
  } catch (const fedrlr::SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kSchema;
  } catch (const fedrlr::InvalidC1& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kSchema;
  } catch (const fedrlr::IngestError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kIngest;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
