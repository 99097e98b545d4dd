#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pixprop/config.hpp"
#include "pixprop/errors.hpp"
#include "support.hpp"

using namespace pixprop;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, std::string* out = nullptr) {
  const fs::path log = fs::temp_directory_path() / "pixprop_cli_out.txt";
  const std::string cmd = std::string(PIXPROP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(log);
    std::stringstream s;
    s << in.rdbuf();
    *out = s.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Tiny end-to-end run: a few scenes, one epoch, small SLIC.
std::string tiny_flags(const fs::path& dir) {
  return "--seed 3 --out " + dir.string() +
         " --set dataset.train_scenes=6 --set dataset.test_scenes=3 --set training.epochs=1"
         " --set training.batch_size=3 --set pipeline.slic.segments=16 --set eval.area_n=50 -q";
}

}  // namespace

TEST(Config, MissingSeedIsRejected) {
  EXPECT_THROW(load_run_config(std::nullopt, {}), ConfigError);
  EXPECT_EQ(load_run_config(std::nullopt, {}, 9).seed, 9u);
}

TEST(Config, OverridesApplyInOrder) {
  const std::vector<std::string> sets{"training.epochs=3", "pipeline.refine=false", "training.epochs=5",
                                      "pipeline.slic.compactness=20", "output_dir=elsewhere"};
  const RunConfig c = load_run_config(std::nullopt, sets, 1);
  EXPECT_EQ(c.training.epochs, 5);
  EXPECT_FALSE(c.pipeline.refine);
  EXPECT_EQ(c.pipeline.slic.compactness, 20.0);
  EXPECT_EQ(c.output_dir, "elsewhere");
  EXPECT_EQ(load_run_config(std::nullopt, sets, 1, "flag").output_dir, "flag");
}

TEST(Config, UnknownKeysAndBadTypes) {
  const std::vector<std::string> unknown{"training.epoch=3"};
  EXPECT_THROW(load_run_config(std::nullopt, unknown, 1), ConfigError);
  const std::vector<std::string> bad_type{"training.epochs=\"many\""};
  EXPECT_THROW(load_run_config(std::nullopt, bad_type, 1), ConfigError);
  const std::vector<std::string> no_eq{"training.epochs"};
  EXPECT_THROW(load_run_config(std::nullopt, no_eq, 1), ConfigError);
  const std::vector<std::string> bad_value{"pipeline.nms_threshold=0"};
  EXPECT_THROW(load_run_config(std::nullopt, bad_value, 1), ConfigError);
}

TEST(Config, JsonRoundTripIsCanonical) {
  const std::vector<std::string> sets{"dataset.area_max=200", "eval.n_values=[1,10,100]"};
  const RunConfig a = load_run_config(std::nullopt, sets, 42);
  const RunConfig b = parse_run_config(a.to_json());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(b.eval.n_values, (std::vector<int>{1, 10, 100}));
  const RunConfig c = load_run_config(std::nullopt, sets, 43);
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, FileThenOverrides) {
  const fs::path dir = testing_support::temp_dir("config_file");
  {
    std::ofstream f(dir / "c.json");
    f << R"({"seed": 7, "training": {"epochs": 2}, "pipeline": {"top_k": 50}})";
  }
  const std::vector<std::string> sets{"pipeline.top_k=60"};
  const RunConfig c = load_run_config(dir / "c.json", sets);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.training.epochs, 2);
  EXPECT_EQ(c.pipeline.top_k, 60);
  {
    std::ofstream f(dir / "bad.json");
    f << "{ not json";
  }
  EXPECT_THROW(load_run_config(dir / "bad.json", {}), ConfigError);
}

TEST(Config, SplitSeedsDiffer) {
  const RunConfig c = load_run_config(std::nullopt, {}, 5);
  EXPECT_NE(c.train_split().seed, c.test_split().seed);
  EXPECT_EQ(c.test_split().scene_count, c.test_scenes);
  EXPECT_EQ(c.effective_area_threshold(), 31);
  EXPECT_EQ(c.train_config(NetworkRole::kConfidence).schedule.trunk_lr, c.confidence_trunk_lr);
}

TEST(Cli, ExitCodes) {
  std::string out;
  EXPECT_EQ(run_cli("", &out), 2);
  EXPECT_EQ(run_cli("config", &out), 2) << out;
  EXPECT_NE(out.find("seed"), std::string::npos);
  EXPECT_EQ(run_cli("config --seed 1 --set nope.key=1", &out), 2) << out;
  EXPECT_EQ(run_cli("bogus", &out), 2);
  EXPECT_EQ(run_cli("config --seed 4", &out), 0);
  EXPECT_EQ(nlohmann::json::parse(out).at("seed"), 4);
  const fs::path dir = testing_support::temp_dir("cli_missing");
  EXPECT_EQ(run_cli("train --seed 1 --out " + dir.string(), &out), 3) << out;
}

TEST(Cli, WorkflowAndStaleArtifacts) {
  const fs::path dir = testing_support::temp_dir("cli_flow");
  const std::string flags = tiny_flags(dir);
  std::string out;
  ASSERT_EQ(run_cli("gen " + flags, &out), 0) << out;
  ASSERT_EQ(run_cli("train " + flags, &out), 0) << out;
  ASSERT_EQ(run_cli("infer " + flags, &out), 0) << out;
  ASSERT_EQ(run_cli("eval " + flags, &out), 0) << out;
  ASSERT_EQ(run_cli("ablate " + flags, &out), 0) << out;
  for (const char* f : {"data/train/manifest.txt", "models/confidence.ckpt", "models/all_sizes.ckpt",
                        "models/loss_history.csv", "proposals/test.csv", "eval/test/recall.csv",
                        "eval/train/abo_by_area.csv", "ablation/ablation.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  std::ifstream ab(dir / "ablation/ablation.csv");
  std::string header;
  std::getline(ab, header);
  EXPECT_EQ(header, "variant,n,metric,value");

  // Corrupting a checkpoint invalidates everything downstream of training.
  {
    std::fstream f(dir / "models/small.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_EQ(run_cli("infer " + flags, &out), 3) << out;
  EXPECT_NE(out.find("stale artifact"), std::string::npos) << out;

  // Regenerating data leaves the old models stale.
  ASSERT_EQ(run_cli("gen " + flags + " --set dataset.noise=0.05", &out), 0) << out;
  EXPECT_EQ(run_cli("infer " + flags + " --set dataset.noise=0.05", &out), 3) << out;
}
