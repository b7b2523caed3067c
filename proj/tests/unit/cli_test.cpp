#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "json.hpp"
#include "lyricrl/numcore/errors.hpp"
#include "run_config.hpp"
#include "support.hpp"

namespace lyricrl::cli {
namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "lyricrl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

TEST(RunConfig, DefaultsValidateAndRoundTrip) {
  const RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const auto back = RunConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(cfg.model_config().vocab_size, cfg.task.vocab.size());
}

TEST(RunConfig, UnknownKeyNamesPath) {
  nlohmann::json j = {{"trainer", {{"bogus", 1}}}};
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trainer.bogus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_json({{"seed", "forty-two"}}), ConfigError);
}

TEST(RunConfig, Overrides) {
  const auto cfg = load_run_config("", {"trainer.dpo.beta=0.5", "trainer.kind=ppo", "seed=7"});
  EXPECT_EQ(cfg.trainer.dpo.beta, 0.5);
  EXPECT_EQ(cfg.trainer.kind, TrainerKind::PPO);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_NE(cfg.hash(), RunConfig{}.hash());
  EXPECT_THROW(load_run_config("", {"trainer.dpo.beta=-1"}), ConfigError);
  EXPECT_THROW(load_run_config("", {"no_equals_sign"}), ConfigError);
  EXPECT_THROW(load_run_config("", {"task.samples_per_prompt=3"}), ConfigError);
}

TEST(RunConfig, FileThenOverrides) {
  testing::TempDir dir("cfg");
  const auto path = dir.path() / "run.json";
  {
    std::ofstream f(path);
    f << R"({"seed": 9, "trainer": {"max_steps": 12}})";
  }
  const auto cfg = load_run_config(path.string(), {"trainer.max_steps=13"});
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.trainer.max_steps, 13);
  EXPECT_THROW(load_run_config((dir.path() / "missing.json").string(), {}), Error);
}

TEST(Cli, PrintConfig) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run({"--print-config", "--set", "trainer.ppo.alpha=0", "gen-data"}), 0);
  const auto out = nlohmann::json::parse(::testing::internal::GetCapturedStdout());
  EXPECT_EQ(out["trainer"]["ppo"]["alpha"], 0.0);
}

TEST(Cli, BadConfigExitCodes) {
  testing::TempDir dir("cli-bad");
  EXPECT_EQ(run({"--workdir", dir.path().string(), "--set", "trainer.bogus=1", "gen-data"}), 2);
  EXPECT_EQ(run({"--workdir", dir.path().string(), "--set", "trainer.dpo.beta=-1", "gen-data"}), 2);
  // nothing to train from: fails and leaves no partial run directory behind
  EXPECT_EQ(run({"--workdir", dir.path().string(), "train", "dpo"}), 1);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "runs" / "dpo"));
  for (const auto& e : std::filesystem::directory_iterator(dir.path()))
    EXPECT_EQ(e.path().filename().string().rfind(".staging", 0), std::string::npos) << e.path();
}

TEST(Cli, GenDataIsByteDeterministic) {
  testing::TempDir a("gen-a"), b("gen-b");
  const std::vector<std::string> small{"--set", "task.corpus_prompts=40", "--set", "task.rm_prompts=5", "--set",
                                       "task.rm_heldout_prompts=5", "--seed", "42"};
  for (const auto* dir : {&a, &b}) {
    auto args = small;
    args.insert(args.end(), {"--workdir", dir->path().string(), "gen-data"});
    ASSERT_EQ(run(args), 0);
  }
  for (const char* rel : {"data/corpus.jsonl", "data/prompts_train.jsonl", "data/prompts_val.jsonl",
                          "data/prompts_rm.jsonl", "data/prompts_heldout.jsonl", "data/stats.json"}) {
    const auto x = testing::slurp(a.path() / rel);
    EXPECT_FALSE(x.empty()) << rel;
    EXPECT_EQ(x, testing::slurp(b.path() / rel)) << rel;
  }
  const auto manifest = nlohmann::json::parse(testing::slurp(a.path() / "manifests" / "gen-data.json"));
  EXPECT_EQ(manifest["seed"], 42);
  EXPECT_TRUE(manifest.contains("config_hash"));
}

TEST(Cli, WorkdirResolution) {
  RunConfig cfg;
  EXPECT_EQ(resolve_workdir("x/y", cfg), std::filesystem::path("x/y"));
  cfg.output_dir = "out";
  EXPECT_EQ(resolve_workdir("", cfg), std::filesystem::path("out"));
}

TEST(Sweep, GridShapes) {
  const RunConfig cfg;
  const auto ppo = sweep_grid(cfg, "ppo");
  EXPECT_EQ(ppo.size(), 8u);
  bool has_alpha0 = false, has_lambda099 = false;
  for (const auto& c : ppo) {
    has_alpha0 |= c.trainer.ppo.alpha == 0.0;
    has_lambda099 |= c.trainer.ppo.lambda == 0.99;
    EXPECT_EQ(c.trainer.kind, TrainerKind::PPO);
  }
  EXPECT_TRUE(has_alpha0);
  EXPECT_TRUE(has_lambda099);
  const auto grpo = sweep_grid(cfg, "grpo");
  ASSERT_EQ(grpo.size(), 2u);
  EXPECT_NE(grpo[0].trainer.grpo.token_level_loss, grpo[1].trainer.grpo.token_level_loss);
  EXPECT_THROW(sweep_grid(cfg, "dpo"), ConfigError);
}

}  // namespace
}  // namespace lyricrl::cli
