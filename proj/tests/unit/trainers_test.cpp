#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "lyricrl/numcore/errors.hpp"
#include "lyricrl/train/trainers.hpp"
#include "support.hpp"

namespace lyricrl {
namespace {

const Vocabulary kVocab{};

struct MiniEnv {
  ModelHandle origin;
  ModelHandle reward_model;
  TrainerEnv env;
};

MiniEnv make_env(Seed seed) {
  MiniEnv m;
  m.origin = init_model(testing::small_task_config(), split(seed, "init"));
  m.reward_model = with_head(m.origin, HeadKind::REWARD, split(seed, "rm"));
  m.env.origin = &m.origin;
  m.env.reward_model = &m.reward_model;
  m.env.train_prompts = gen_prompts(6, split(seed, "train"), kVocab, "t");
  m.env.val_prompts = gen_prompts(3, split(seed, "val"), kVocab, "v");
  const CorruptionSpec spec;
  for (std::size_t i = 0; i < m.env.train_prompts.size(); ++i) {
    const auto& p = m.env.train_prompts[i];
    for (int k = 0; k < 4; ++k) {
      const Seed s = split(split(seed, i), static_cast<std::uint64_t>(k));
      auto traj = corrupt_trajectory(reference_trajectory(p, kVocab, s), spec, p, split(s, "c"));
      auto g = score_sample(p, traj, 0.0, s);
      g.sample_id = p.prompt_id + "-v" + std::to_string(k);
      m.env.samples.push_back(g);
    }
  }
  m.env.pairs = build_dataset(m.env.samples, {}).pairs;
  m.env.eval.samples_per_prompt = 1;
  return m;
}

TrainerConfig quick(TrainerKind kind, int steps, int every) {
  TrainerConfig c;
  c.kind = kind;
  c.max_steps = steps;
  c.rs_steps = steps;
  c.validation.every = every;
  c.validation.patience = 100;
  c.probe_every = 5;
  c.dpo.lr = c.rs.lr = 1e-3;
  c.ppo.batch = 2;
  c.ppo.epochs = 1;
  c.grpo.prompts_per_step = 1;
  c.reward_source = Scorer::GROUND_TRUTH_PER;
  return c;
}

TEST(TrainerKind, StringRoundTrip) {
  for (auto k : {TrainerKind::RS, TrainerKind::DPO, TrainerKind::RS_THEN_DPO, TrainerKind::PPO, TrainerKind::GRPO})
    EXPECT_EQ(trainer_kind_from_string(to_string(k)), k);
  EXPECT_EQ(trainer_kind_from_string("rs+dpo"), TrainerKind::RS_THEN_DPO);
  EXPECT_THROW(trainer_kind_from_string("sft"), ConfigError);
}

TEST(Trainer, DpoLogLayoutAndValidationCadence) {
  auto m = make_env(Seed{1});
  const auto res = run_trainer(quick(TrainerKind::DPO, 20, 10), m.env, Seed{2});
  ASSERT_EQ(res.log.rows.size(), 21u);
  EXPECT_EQ(res.steps_run, 20);
  EXPECT_EQ(res.dpo_phase_start, 0);
  for (const auto& row : res.log.rows) {
    const bool validated = row.step % 10 == 0;
    EXPECT_EQ(std::isfinite(row.mean_validation_reward), validated) << row.step;
    EXPECT_EQ(std::isfinite(row.chosen_logprob_sum), row.step % 5 == 0) << row.step;
    if (row.step > 0) EXPECT_TRUE(std::isfinite(row.loss));
    if (validated) EXPECT_NEAR(row.bucket_low + row.bucket_mid + row.bucket_high, 1.0, 1e-9);
  }
  EXPECT_TRUE(res.best_step == 0 || res.best_step == 10 || res.best_step == 20);
  EXPECT_GE(res.best_report.mean_reward, res.origin_report.mean_reward);
  EXPECT_EQ(res.log.rows[0].mean_validation_reward, res.origin_report.mean_reward);
}

TEST(Trainer, DpoMarginWidensOnTinyData) {
  auto m = make_env(Seed{3});
  auto cfg = quick(TrainerKind::DPO, 30, 30);
  const auto res = run_trainer(cfg, m.env, Seed{4});
  const auto& first = res.log.rows.front();
  const auto& last = res.log.rows.back();
  EXPECT_GT(last.chosen_logprob_sum - last.rejected_logprob_sum, first.chosen_logprob_sum - first.rejected_logprob_sum);
}

TEST(Trainer, Deterministic) {
  auto m = make_env(Seed{5});
  const auto cfg = quick(TrainerKind::DPO, 10, 5);
  const auto a = run_trainer(cfg, m.env, Seed{6});
  const auto b = run_trainer(cfg, m.env, Seed{6});
  ASSERT_EQ(a.log.rows.size(), b.log.rows.size());
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    const auto& x = a.log.rows[i];
    const auto& y = b.log.rows[i];
    EXPECT_EQ(x.step, y.step);
    EXPECT_TRUE(same(x.loss, y.loss) && same(x.mean_validation_reward, y.mean_validation_reward) &&
                same(x.chosen_logprob_sum, y.chosen_logprob_sum) && same(x.rejected_logprob_sum, y.rejected_logprob_sum))
        << i;
  }
  EXPECT_TRUE(a.best.params == b.best.params);
}

TEST(Trainer, EarlyStopping) {
  auto m = make_env(Seed{7});
  auto cfg = quick(TrainerKind::RS, 200, 2);
  cfg.rs.lr = 1e-12;  // validation cannot improve
  cfg.validation.patience = 3;
  const auto res = run_trainer(cfg, m.env, Seed{8});
  EXPECT_TRUE(res.early_stopped);
  EXPECT_EQ(res.steps_run, 6);
  EXPECT_EQ(res.best_step, 0);
}

TEST(Trainer, RsThenDpoPhases) {
  auto m = make_env(Seed{9});
  auto cfg = quick(TrainerKind::RS_THEN_DPO, 10, 5);
  cfg.rs_steps = 10;
  const auto res = run_trainer(cfg, m.env, Seed{10});
  EXPECT_EQ(res.dpo_phase_start, 10);
  EXPECT_EQ(res.steps_run, 20);
  ASSERT_EQ(res.log.rows.size(), 21u);
  for (std::size_t i = 0; i < res.log.rows.size(); ++i) EXPECT_EQ(res.log.rows[i].step, static_cast<int>(i));
}

TEST(Trainer, PpoAndGrpoRun) {
  auto m = make_env(Seed{11});
  const auto ppo = run_trainer(quick(TrainerKind::PPO, 2, 2), m.env, Seed{12});
  EXPECT_EQ(ppo.steps_run, 2);
  EXPECT_EQ(ppo.dpo_phase_start, -1);
  auto cfg = quick(TrainerKind::GRPO, 2, 2);
  cfg.reward_source = Scorer::REWARD_MODEL;
  const auto grpo = run_trainer(cfg, m.env, Seed{13});
  EXPECT_EQ(grpo.steps_run, 2);
  for (const auto& r : grpo.log.rows)
    if (r.step > 0) EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Trainer, MissingInputs) {
  auto m = make_env(Seed{14});
  auto env = m.env;
  env.origin = nullptr;
  EXPECT_THROW(run_trainer(quick(TrainerKind::DPO, 1, 1), env, Seed{1}), IoError);
  env = m.env;
  env.reward_model = nullptr;
  auto cfg = quick(TrainerKind::PPO, 1, 1);
  cfg.reward_source = Scorer::REWARD_MODEL;
  EXPECT_THROW(run_trainer(cfg, env, Seed{1}), IoError);
  cfg = quick(TrainerKind::DPO, 1, 1);
  cfg.dpo.beta = -1;
  EXPECT_THROW(run_trainer(cfg, m.env, Seed{1}), ConfigError);
}

TEST(Trainer, HookSeesEveryNewBest) {
  auto m = make_env(Seed{15});
  std::vector<int> steps;
  TrainerHooks hooks;
  hooks.on_new_best = [&](const ModelHandle&, int step) { steps.push_back(step); };
  const auto res = run_trainer(quick(TrainerKind::DPO, 10, 5), m.env, Seed{16}, hooks);
  ASSERT_FALSE(steps.empty());
  EXPECT_EQ(steps.front(), 0);
  EXPECT_EQ(steps.back(), res.best_step);
}

TEST(CollectRollouts, ArraysAreConsistent) {
  auto m = make_env(Seed{17});
  const auto ref = clone_frozen(m.origin);
  const auto critic = with_head(m.origin, HeadKind::VALUE, Seed{18});
  PpoConfig cfg;
  cfg.batch = 3;
  auto scorer = [](const Prompt&, const TokenSeq& t, Seed) { return t.size() % 2 ? 0.25 : 0.75; };
  const auto b = collect_rollouts(m.origin, ref, critic, scorer, m.env.train_prompts, cfg, kVocab, 1.0, Seed{19});
  ASSERT_EQ(b.samples.size(), 3u);
  EXPECT_NO_THROW(b.validate());
  for (const auto& r : b.samples) {
    EXPECT_EQ(r.old_logprobs, r.ref_logprobs);
    EXPECT_EQ(r.rewards.back(), r.terminal_reward);
    const auto want = compute_advantages(r.rewards, r.values, cfg.gamma, cfg.lambda);
    EXPECT_EQ(r.advantages, want.advantages);
  }
}

TEST(CollectGroup, AdvantagesAndSelection) {
  auto m = make_env(Seed{20});
  const auto ref = clone_frozen(m.origin);
  auto scorer = [](const Prompt& p, const TokenSeq& t, Seed s) { return score_sample(p, t, 0.0, s).reward; };
  const GrpoConfig cfg;
  const auto g = collect_group(m.origin, ref, scorer, m.env.train_prompts[0], cfg, kVocab, 1.0, Seed{21});
  ASSERT_EQ(g.samples.size(), 8u);
  EXPECT_NEAR(std::accumulate(g.advantages.begin(), g.advantages.end(), 0.0), 0.0, 1e-9);
  EXPECT_EQ(g.selected.size(), 4u);
}

TEST(Pretrain, LossDecreases) {
  auto model = init_model(testing::small_task_config(), Seed{22});
  const auto corpus = build_pretrain_corpus(50, CorruptionSpec{}, Seed{23});
  PretrainConfig cfg;
  cfg.steps = 60;
  cfg.log_every = 20;
  const auto log = pretrain(model, corpus, cfg, kVocab, Seed{24});
  ASSERT_GE(log.rows.size(), 2u);
  EXPECT_LT(log.rows.back().loss, log.rows.front().loss);
}

TEST(RewardModel, TrainingReducesL1) {
  auto m = make_env(Seed{25});
  auto rm = with_head(m.origin, HeadKind::REWARD, Seed{26});
  const auto ex = reward_examples(m.env.samples, m.env.train_prompts, kVocab);
  ASSERT_EQ(ex.size(), m.env.samples.size());
  const double before = reward_l1(rm, ex);
  RewardTrainConfig cfg;
  cfg.steps = 60;
  train_reward_model(rm, ex, cfg, Seed{27});
  EXPECT_LT(reward_l1(rm, ex), before);
}

}  // namespace
}  // namespace lyricrl
