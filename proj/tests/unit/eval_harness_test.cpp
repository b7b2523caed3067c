#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lyricrl/eval/eval_harness.hpp"
#include "lyricrl/numcore/errors.hpp"
#include "support.hpp"

namespace lyricrl {
namespace {

const Vocabulary kVocab{};

GeneratedSample with_reward(double r) {
  GeneratedSample s;
  s.reward = r;
  s.per_raw = 1.0 - r;
  return s;
}

TEST(BucketReport, Boundaries) {
  const std::vector<GeneratedSample> s{with_reward(0.69), with_reward(0.7), with_reward(0.8), with_reward(0.81)};
  const auto r = bucket_report(s);
  EXPECT_EQ(r.n, 4);
  EXPECT_DOUBLE_EQ(r.frac_low, 0.25);
  EXPECT_DOUBLE_EQ(r.frac_mid, 0.5);
  EXPECT_DOUBLE_EQ(r.frac_high, 0.25);
  EXPECT_NEAR(r.mean_reward, 0.75, 1e-12);
  EXPECT_NEAR(r.frac_low + r.frac_mid + r.frac_high, 1.0, 1e-9);
}

TEST(Evaluate, PerfectGenerator) {
  const auto prompts = gen_prompts(20, Seed{1});
  const Generator perfect = [](const Prompt& p, Seed s) { return reference_trajectory(p, kVocab, s); };
  const auto res = evaluate_generator(perfect, prompts, {}, Seed{2});
  EXPECT_EQ(res.report.n, 80);
  EXPECT_EQ(res.report.mean_reward, 1.0);
  EXPECT_EQ(res.report.frac_high, 1.0);
  EXPECT_EQ(res.report.halluc_rate, 0.0);
}

TEST(Evaluate, ImmediateEos) {
  const auto prompts = gen_prompts(20, Seed{3});
  const Generator silent = [](const Prompt&, Seed) { return TokenSeq{kVocab.eos()}; };
  const auto res = evaluate_generator(silent, prompts, {}, Seed{4});
  EXPECT_EQ(res.report.mean_reward, 0.0);
  EXPECT_EQ(res.report.frac_low, 1.0);
  EXPECT_EQ(res.report.halluc_rate, 1.0);
}

TEST(Evaluate, DeterministicAndValidated) {
  const auto prompts = gen_prompts(5, Seed{5});
  const auto policy = init_model(testing::small_task_config(), Seed{6});
  EvalOptions o;
  o.samples_per_prompt = 2;
  o.noise_rate = 0.02;
  const auto a = evaluate_policy(policy, prompts, o, Seed{7});
  const auto b = evaluate_policy(policy, prompts, o, Seed{7});
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.records.size(), 10u);
  EXPECT_EQ(a.records[1].sample_id, prompts[0].prompt_id + "-v1");
  o.samples_per_prompt = 0;
  EXPECT_THROW(evaluate_policy(policy, prompts, o, Seed{7}), DomainError);
  o.samples_per_prompt = 1;
  o.scorer = Scorer::REWARD_MODEL;
  EXPECT_THROW(evaluate_policy(policy, prompts, o, Seed{7}), ConfigError);
}

TEST(Evaluate, RewardModelScorerKeepsGroundTruthFields) {
  const auto prompts = gen_prompts(3, Seed{8});
  const auto rm = init_model(testing::small_task_config(HeadKind::REWARD), Seed{9});
  const Generator perfect = [](const Prompt& p, Seed s) { return reference_trajectory(p, kVocab, s); };
  EvalOptions o;
  o.scorer = Scorer::REWARD_MODEL;
  o.reward_model = &rm;
  const auto res = evaluate_generator(perfect, prompts, o, Seed{10});
  for (const auto& r : res.records) {
    EXPECT_EQ(r.reward, 0.5);
    EXPECT_EQ(r.per_raw, 0.0);
  }
}

TEST(CompareReports, Deltas) {
  BucketReport origin{0.771, 0.173, 0.2, 0.627, 0.1, 500};
  BucketReport tuned{0.845, 0.048, 0.2, 0.752, 0.05, 500};
  const auto same = compare_reports(origin, origin);
  EXPECT_EQ(same.mean_reward.absolute, 0.0);
  EXPECT_EQ(same.frac_low.relative, 0.0);
  const auto d = compare_reports(origin, tuned);
  EXPECT_NEAR(100.0 * d.mean_reward.relative, 9.60, 0.005);
  EXPECT_NEAR(100.0 * d.frac_low.absolute, -12.50, 1e-9);
  tuned.n = 499;
  EXPECT_THROW(compare_reports(origin, tuned), ComparabilityError);
  BucketReport zero{};
  BucketReport some{};
  some.frac_low = 0.1;
  EXPECT_TRUE(std::isinf(compare_reports(zero, some).frac_low.relative));
}

TrainingLog sample_log() {
  TrainingLog log;
  for (int s = 0; s <= 20; ++s) {
    LogRow r;
    r.step = s;
    r.loss = s == 0 ? std::nan("") : 1.0 / s;
    if (s % 10 == 0) {
      r.mean_validation_reward = 0.8 + s * 0.001;
      r.bucket_low = 0.1;
      r.bucket_mid = 0.2;
      r.bucket_high = 0.7;
      r.chosen_logprob_sum = -10.0 + s * 0.1;
      r.rejected_logprob_sum = -11.0 - s * 0.1;
    }
    log.rows.push_back(r);
  }
  return log;
}

TEST(TrainingLog, CsvRoundTrip) {
  testing::TempDir dir("log");
  const auto log = sample_log();
  log.save_csv(dir.path() / "log.csv");
  const auto text = testing::slurp(dir.path() / "log.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,loss,mean_validation_reward,bucket_low,bucket_mid,bucket_high,"
                                             "chosen_logprob_sum,rejected_logprob_sum");
  const auto back = TrainingLog::load_csv(dir.path() / "log.csv");
  ASSERT_EQ(back.rows.size(), log.rows.size());
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].step, log.rows[i].step);
    EXPECT_TRUE(back.rows[i].loss == log.rows[i].loss || std::isnan(back.rows[i].loss));
    EXPECT_EQ(std::isnan(back.rows[i].mean_validation_reward), std::isnan(log.rows[i].mean_validation_reward));
  }
  log.save_csv(dir.path() / "again.csv");
  EXPECT_EQ(testing::slurp(dir.path() / "again.csv"), text);
}

TEST(ExportCurves, WritesSeries) {
  testing::TempDir dir("curves");
  const auto files = export_curves(sample_log(), dir.path());
  bool has_chosen = false, has_svg = false;
  for (const auto& f : files) {
    EXPECT_TRUE(std::filesystem::exists(f));
    has_chosen |= f.stem() == "chosen_logprob_sum" && f.extension() == ".csv";
    has_svg |= f.extension() == ".svg";
  }
  EXPECT_TRUE(has_chosen);
  EXPECT_TRUE(has_svg);
  const auto csv = testing::slurp(dir.path() / "mean_validation_reward.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // header + steps 0, 10, 20
  EXPECT_THROW(export_curves(TrainingLog{}, dir.path()), DomainError);
}

TEST(ReportJson, RoundTrip) {
  testing::TempDir dir("report");
  const BucketReport r{0.8123456789, 0.1, 0.3, 0.6, 0.05, 360};
  save_report_json(dir.path() / "r.json", r);
  const auto back = load_report_json(dir.path() / "r.json");
  EXPECT_EQ(back.mean_reward, r.mean_reward);
  EXPECT_EQ(back.n, r.n);
  EXPECT_THROW(load_report_json(dir.path() / "none.json"), IoError);
}

}  // namespace
}  // namespace lyricrl
