#include <algorithm>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cap2aug/cli.hpp"
#include "cap2aug/evaluator.hpp"
#include "test_util.hpp"

using namespace cap2aug;
using cap2aug::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A small dataset written through the CLI itself.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = (dir_ / "data" / "manifest.json").string();
    const Result r = run_cli({"synth-data", "--out", (dir_ / "data").string(), "--ways", "4", "--shots", "6",
                              "--synthetic", "8", "--dim", "16", "--test", "10", "--seed", "3"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
  }

  std::vector<std::string> train_args(const fs::path& out) const {
    return {"train", "--manifest", manifest_, "--out", out.string(), "--shots", "4", "--epochs", "3", "--seed", "1"};
  }

  TempDir dir_;
  std::string manifest_;
};

}  // namespace

TEST_F(CliTest, SynthDataIsLoadableAndDeterministic) {
  const Dataset d = load_dataset(fs::path(manifest_));
  EXPECT_EQ(d.class_count(), 4u);
  EXPECT_EQ(d.train.dim, 16u);
  const Result again = run_cli({"synth-data", "--out", (dir_ / "data2").string(), "--ways", "4", "--shots", "6",
                                "--synthetic", "8", "--dim", "16", "--test", "10", "--seed", "3"});
  ASSERT_EQ(again.code, cli::kOk);
  for (const char* f : {"train_real.capf", "train_synthetic.capf", "test.capf", "text_classifier.capf", "manifest.json"})
    EXPECT_EQ(slurp(dir_ / "data" / f), slurp(dir_ / "data2" / f)) << f;
}

TEST_F(CliTest, TrainWritesArtifacts) {
  const Result r = run_cli(train_args(dir_ / "run"));
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const char* f : {"run_config.json", "history.jsonl", "adapter.capf", "adapter.json", "report.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const std::string history = slurp(dir_ / "run" / "history.jsonl");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  const auto report = nlohmann::json::parse(slurp(dir_ / "run" / "report.json"));
  EXPECT_TRUE(report.contains("overall_acc"));
}

TEST_F(CliTest, TrainExportsThreeEmbeddingSnapshots) {
  auto args = train_args(dir_ / "run");
  args.push_back("--export-embeddings");
  ASSERT_EQ(run_cli(args).code, cli::kOk);
  std::vector<FeatureMatrix> snaps;
  for (const char* f : {"embeddings_epoch0.capf", "embeddings_epoch1.capf", "embeddings_epoch3.capf"}) {
    ASSERT_TRUE(fs::exists(dir_ / "run" / f)) << f;
    snaps.push_back(read_feature_file(dir_ / "run" / f));
  }
  for (const auto& s : snaps) {
    EXPECT_EQ(s.rows, snaps[0].rows);
    EXPECT_EQ(s.dim, snaps[0].dim);
  }
}

TEST_F(CliTest, EvaluateReloadsCheckpoint) {
  ASSERT_EQ(run_cli(train_args(dir_ / "run")).code, cli::kOk);
  const Result r = run_cli({"evaluate", "--manifest", manifest_, "--checkpoint", (dir_ / "run" / "adapter").string(),
                            "--out", (dir_ / "eval").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto trained = nlohmann::json::parse(slurp(dir_ / "run" / "report.json"));
  const auto reloaded = nlohmann::json::parse(slurp(dir_ / "eval" / "report.json"));
  // Keys go through float32 on disk; predictions on this data are unaffected.
  EXPECT_EQ(trained["overall_acc"], reloaded["overall_acc"]);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({"train", "--manifest", (dir_ / "nope.json").string(), "--out", (dir_ / "x").string()}).code,
            cli::kDataError);
  auto bad_alpha = train_args(dir_ / "y");
  bad_alpha.insert(bad_alpha.end(), {"--alpha", "-1"});
  EXPECT_EQ(run_cli(bad_alpha).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"ablate", "alpha", "--manifest", manifest_, "--grid", ""}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"ablate", "alpha", "--manifest", manifest_, "--grid", "0,x"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"ablate", "bogus", "--manifest", manifest_}).code, cli::kConfigError);
}

TEST_F(CliTest, RefusesNonEmptyOutputWithoutForce) {
  ASSERT_EQ(run_cli(train_args(dir_ / "run")).code, cli::kOk);
  const std::string first = slurp(dir_ / "run" / "history.jsonl");
  const Result again = run_cli(train_args(dir_ / "run"));
  EXPECT_EQ(again.code, cli::kConfigError);
  EXPECT_NE(again.err.find("--force"), std::string::npos);

  auto forced = train_args(dir_ / "run");
  forced.push_back("--force");
  ASSERT_EQ(run_cli(forced).code, cli::kOk);
  EXPECT_EQ(slurp(dir_ / "run" / "history.jsonl"), first);
}

TEST_F(CliTest, ConfigReplayReproducesArtifacts) {
  auto args = train_args(dir_ / "a");
  args.insert(args.end(), {"--alpha", "0.1", "--lr", "0.005"});
  ASSERT_EQ(run_cli(args).code, cli::kOk);
  const Result replay = run_cli({"train", "--config", (dir_ / "a" / "run_config.json").string(), "--out",
                                 (dir_ / "b").string()});
  ASSERT_EQ(replay.code, cli::kOk) << replay.err;
  for (const char* f : {"history.jsonl", "adapter.capf", "report.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  std::ofstream(dir_ / "cfg.json") << R"({"alpha": 0.5, "epochs": 2})";
  auto args = train_args(dir_ / "run");
  args.insert(args.end(), {"--config", (dir_ / "cfg.json").string(), "--alpha", "0.25"});
  ASSERT_EQ(run_cli(args).code, cli::kOk);
  const auto cfg = nlohmann::json::parse(slurp(dir_ / "run" / "run_config.json"));
  EXPECT_EQ(cfg["alpha"], 0.25);
  EXPECT_EQ(cfg["epochs"], 3);
}

TEST_F(CliTest, AblateTableShapes) {
  const Result alpha = run_cli({"ablate", "alpha", "--manifest", manifest_, "--shots", "2,4", "--epochs", "1",
                                "--out", (dir_ / "alpha").string()});
  ASSERT_EQ(alpha.code, cli::kOk) << alpha.err;
  EXPECT_EQ(slurp(dir_ / "alpha" / "alpha.csv").substr(0, 10), "alpha,2,4\n");
  const std::string csv = slurp(dir_ / "alpha" / "alpha.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  const Result synth = run_cli({"ablate", "synth-count", "--manifest", manifest_, "--grid", "0,4,8", "--shots", "2",
                                "--epochs", "1", "--out", (dir_ / "synth").string()});
  ASSERT_EQ(synth.code, cli::kOk) << synth.err;
  EXPECT_EQ(slurp(dir_ / "synth" / "synth-count.csv").substr(0, 8), "K,0,4,8\n");
  EXPECT_EQ(run_cli({"ablate", "synth-count", "--manifest", manifest_, "--shots", "2", "--epochs", "1"}).code,
            cli::kDataError);  // default grid reaches 80 synthetic rows, dataset has 8
}

TEST(CliGradcheck, PassesAtDefaultTolerance) {
  const Result r = run_cli({"gradcheck", "--alpha", "1"});
  EXPECT_EQ(r.code, cli::kOk) << r.out;
  EXPECT_NE(r.out.find("alignment term: exercised"), std::string::npos);
}

TEST(CliGradcheck, SkipsAlignmentAtZeroAlpha) {
  const Result r = run_cli({"gradcheck", "--alpha", "0", "--seed", "4"});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_NE(r.out.find("alignment term: skipped (alpha=0)"), std::string::npos);
}

TEST(CliGradcheck, ImpossibleToleranceFailsWithCoordinate) {
  const Result r = run_cli({"gradcheck", "--tolerance", "1e-12"});
  EXPECT_EQ(r.code, cli::kCheckFailed);
  EXPECT_NE(r.out.find("FAILED at key"), std::string::npos);
}
