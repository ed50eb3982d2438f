#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedrlr/errors.hpp"
#include "fedrlr/experiment.hpp"

using namespace fedrlr;
using namespace fedrlr::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fedrlr_exp_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const char* kPlanted = R"({"task": "planted_ls", "rounds": 800, "num_devices": 4,
  "learning_rate": {"q": 10, "nu": 20}, "channel": {"policy": "error_free"}, "record_every": 10})";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FEDRLR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.task, TaskKind::kMnistMlp);
  EXPECT_EQ(c.fed.num_devices, 10);
  EXPECT_EQ(c.fed.batch_size, 6);
  EXPECT_EQ(c.fed.rounds, 2000);
  EXPECT_DOUBLE_EQ(c.fed.lr.q, 2.0);
  EXPECT_DOUBLE_EQ(c.fed.lr.nu, 1000.0);
  EXPECT_DOUBLE_EQ(c.fed.penalty.c1, 0.006);
  EXPECT_DOUBLE_EQ(c.fed.penalty.mu, 3.0);
  EXPECT_EQ(c.fed.policy.kind, airlink::PowerPolicy::Kind::kChannelInversion);
  ASSERT_TRUE(c.fed.snr_db.has_value());
  EXPECT_DOUBLE_EQ(*c.fed.snr_db, 25.0);
  EXPECT_DOUBLE_EQ(c.fed.sigma_z2, 1.0);
  EXPECT_EQ(c.model.ranks, std::vector<Index>{4});
  EXPECT_EQ(c.model.hidden, (std::vector<Index>{256, 256}));
}

TEST(Config, BadC1ReportsFieldPath) {
  try {
    parse_config(R"({"penalty": {"c1": 2}})");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "penalty.c1");
  }
}

TEST(Config, UnknownAndMistypedKeysRejected) {
  try {
    parse_config(R"({"learning_rate": {"qq": 1}})");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "learning_rate.qq");
  }
  EXPECT_THROW(parse_config(R"({"rounds": "many"})"), SchemaError);
  EXPECT_THROW(parse_config(R"({"task": "imagenet"})"), SchemaError);
  EXPECT_THROW(parse_config("not json"), SchemaError);
  EXPECT_THROW(parse_config(R"({"num_devices": 0})"), SchemaError);
}

TEST(Config, SerializationRoundTrips) {
  const RunConfig a = parse_config(kPlanted);
  const std::string text = serialize(a);
  EXPECT_EQ(serialize(parse_config(text)), text);
  EXPECT_EQ(serialize(parse_config("{}")), serialize(parse_config(serialize(parse_config("{}")))));
}

TEST(Config, OverridesApplyAfterFile) {
  const RunConfig c = parse_config(kPlanted, {"rounds=7", "learning_rate.q=3.5", "channel.policy=gbma",
                                              "channel.snr_db=null"});
  EXPECT_EQ(c.fed.rounds, 7);
  EXPECT_DOUBLE_EQ(c.fed.lr.q, 3.5);
  EXPECT_EQ(c.fed.policy.kind, airlink::PowerPolicy::Kind::kGbmaPhaseAlign);
  EXPECT_FALSE(c.fed.snr_db.has_value());
  EXPECT_THROW(parse_config("{}", {"rounds"}), SchemaError);
  EXPECT_THROW(parse_config("{}", {"nothing.here=1"}), SchemaError);
}

TEST(Config, OutputDirEnvironmentWins) {
  RunConfig c = parse_config(R"({"output": {"dir": "from_config"}})");
  ::unsetenv("FEDRLR_OUTPUT_DIR");
  EXPECT_EQ(output_dir(c), fs::path("from_config"));
  ::setenv("FEDRLR_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(output_dir(c), fs::path("/tmp/from_env"));
  ::unsetenv("FEDRLR_OUTPUT_DIR");
}

TEST(Csv, HeaderAndNanFormatting) {
  EXPECT_EQ(csv_header(2),
            "t,train_loss,test_accuracy,consensus_gap,stationarity_norm,rank_0,rank_1,cumulative_symbols,"
            "p_ave,test_loss\n");
  federation::RoundRecord r;
  r.round = 3;
  r.train_loss = 0.5;
  r.test_accuracy = std::numeric_limits<double>::quiet_NaN();
  r.consensus_gap = 0.25;
  r.stationarity_norm = 1.0;
  r.ranks = {2};
  r.cumulative_symbols = 42;
  r.p_ave = 0.0;
  r.test_loss = 0.125;
  EXPECT_EQ(csv_row(r), "3,0.5,nan,0.25,1,2,42,0,0.125\n");
}

TEST(Experiment, PlantedSmokeRunAndDeterminism) {
  const RunConfig cfg = parse_config(kPlanted);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const RunOutcome ra = run_experiment(cfg, Method::kFedRlr, a);
  const RunOutcome rb = run_experiment(cfg, Method::kFedRlr, b);
  EXPECT_EQ(slurp(ra.csv_path), slurp(rb.csv_path));
  EXPECT_EQ(ra.summary_json, rb.summary_json);
  ASSERT_TRUE(ra.relative_error.has_value());
  EXPECT_LE(*ra.relative_error, 1e-2);
  EXPECT_LT(ra.records.back().train_loss, 1e-2);
  EXPECT_FALSE(fs::exists(a / "fedrlr.csv.tmp"));
  EXPECT_EQ(ra.records.back().round, 800);

  const RunOutcome fa = run_experiment(cfg, Method::kFedAvg, a);
  EXPECT_NE(fa.csv_path, ra.csv_path);
  EXPECT_TRUE(fs::exists(fa.summary_path));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, DifferentSeedsDiffer) {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  const RunOutcome ra = run_experiment(parse_config(kPlanted, {"seed=1", "rounds=20"}), Method::kFedRlr, a);
  const RunOutcome rb = run_experiment(parse_config(kPlanted, {"seed=2", "rounds=20"}), Method::kFedRlr, b);
  EXPECT_NE(slurp(ra.csv_path), slurp(rb.csv_path));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, ExitCodesAndNoPartialOutput) {
  const fs::path d = scratch("cli");
  std::ofstream(d / "planted.json") << kPlanted;
  std::ofstream(d / "bad.json") << R"({"penalty": {"c1": 1.5}})";
  std::ofstream(d / "missing.json")
      << R"({"rounds": 5, "mnist": {"train_images": "/nonexistent/a", "train_labels": "/nonexistent/b"}})";

  EXPECT_EQ(run_cli("validate " + (d / "planted.json").string()), 0);
  EXPECT_EQ(run_cli("validate " + (d / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("run " + (d / "missing.json").string() + " --out " + (d / "m").string()), 3);
  EXPECT_FALSE(fs::exists(d / "m" / "fedrlr.csv"));
  EXPECT_EQ(run_cli("run " + (d / "planted.json").string() + " --set rounds=20 -q --out " + (d / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(d / "ok" / "fedrlr.csv"));
  EXPECT_TRUE(fs::exists(d / "ok" / "fedrlr_summary.json"));
  EXPECT_EQ(run_cli("fedavg " + (d / "planted.json").string() + " --set rounds=20 -q --out " + (d / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(d / "ok" / "fedavg.csv"));
  EXPECT_EQ(run_cli("bogus"), 1);
  fs::remove_all(d);
}

TEST(Cli, EnvironmentOverridesOutputDir) {
  const fs::path d = scratch("cli_env");
  std::ofstream(d / "planted.json") << R"({"task": "planted_ls", "rounds": 5, "output": {"dir": ")"
                                    << (d / "cfg").string() << R"("}})";
  const int status = std::system(("env FEDRLR_OUTPUT_DIR=" + (d / "env").string() + " " + FEDRLR_CLI_PATH +
                                  " run " + (d / "planted.json").string() + " -q > /dev/null 2>&1")
                                     .c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(fs::exists(d / "env" / "fedrlr.csv"));
  EXPECT_FALSE(fs::exists(d / "cfg"));
  fs::remove_all(d);
}

TEST(Config, ShippedExamplesParse) {
  const fs::path root = fs::path(FEDRLR_TEST_DATA_DIR).parent_path().parent_path() / "configs";
  for (const char* name : {"planted.json", "mnist.json"}) {
    EXPECT_NO_THROW(load_config(root / name)) << name;
  }
  EXPECT_EQ(load_config(root / "planted.json").task, TaskKind::kPlantedLs);
}
