#include <algorithm>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lyricrl/numcore/errors.hpp"
#include "lyricrl/prefs/preference_data.hpp"
#include "support.hpp"

namespace lyricrl {
namespace {

const Vocabulary kVocab{};

GeneratedSample fake(const std::string& id, int n_errors, bool halluc = false, const std::string& prompt = "p0") {
  GeneratedSample s;
  s.sample_id = id;
  s.prompt_id = prompt;
  s.n_errors = n_errors;
  s.per_raw = n_errors / 50.0;
  s.reward = 1.0 - std::min(s.per_raw, 1.0);
  s.hallucinated = halluc;
  return s;
}

PreferencePair pair(const std::string& c, const std::string& r, PairRule rule) { return {"p0", c, r, rule}; }

TEST(ScoreSample, CleanTrajectoryIsPerfect) {
  const auto p = gen_prompts(1, Seed{1})[0];
  const auto s = score_sample(p, reference_trajectory(p, kVocab, Seed{2}), 0.0, Seed{3});
  EXPECT_EQ(s.per_raw, 0.0);
  EXPECT_EQ(s.reward, 1.0);
  EXPECT_EQ(s.n_errors, 0);
  EXPECT_FALSE(s.hallucinated);
  EXPECT_EQ(s.hyp_phonemes, p.lyric);
}

TEST(ScoreSample, InsertRunIsHallucinated) {
  const auto p = gen_prompts(1, Seed{4})[0];
  const auto traj = reference_trajectory(p, kVocab, Seed{5});
  const auto bad = apply_corruption(traj, {CorruptionMode::INSERT_RUN, 2, 6}, p, kVocab);
  const auto s = score_sample(p, bad, 0.0, Seed{6}, PairingConfig::paper_scale().thresholds());
  EXPECT_TRUE(s.hallucinated);
  EXPECT_EQ(s.n_errors, 6);
  EXPECT_DOUBLE_EQ(s.reward, 1.0 - std::min(s.per_raw, 1.0));
}

TEST(ScoreSample, NoiseChannelExpectation) {
  Prompt p{"p", {}, kVocab.style(0)};
  for (int i = 0; i < 40; ++i) p.lyric.push_back(i % 24);
  const auto traj = reference_trajectory(p, kVocab, Seed{7});
  double sum = 0.0;
  for (std::uint64_t k = 0; k < 500; ++k) sum += score_sample(p, traj, 0.02, Seed{k}).per_raw;
  EXPECT_NEAR(sum / 500, 0.02, 0.004);
}

TEST(BuildPairs, ErrorDifferenceRule) {
  const std::vector<GeneratedSample> g{fake("a", 50), fake("b", 5), fake("c", 48), fake("d", 47)};
  const auto pairs = build_pairs(g, PairingConfig::paper_scale());
  const std::vector<PreferencePair> want{pair("b", "a", PairRule::ERR_DIFF), pair("b", "c", PairRule::ERR_DIFF),
                                         pair("b", "d", PairRule::ERR_DIFF)};
  EXPECT_EQ(pairs, want);
}

TEST(BuildPairs, MinMaxFallback) {
  const std::vector<GeneratedSample> g{fake("a", 10), fake("b", 12), fake("c", 14), fake("d", 15)};
  const auto pairs = build_pairs(g, PairingConfig::paper_scale());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], pair("a", "d", PairRule::MINMAX_FALLBACK));
}

TEST(BuildPairs, HallucinationCrossProduct) {
  const std::vector<GeneratedSample> g{fake("a", 3), fake("b", 4), fake("c", 9, true), fake("d", 7, true)};
  const auto pairs = build_pairs(g, PairingConfig::paper_scale());
  ASSERT_EQ(pairs.size(), 4u);
  for (const auto& pr : pairs) {
    EXPECT_EQ(pr.rule, PairRule::HALLUC_CROSS);
    EXPECT_TRUE(pr.chosen_id == "a" || pr.chosen_id == "b");
    EXPECT_TRUE(pr.rejected_id == "c" || pr.rejected_id == "d");
  }
}

TEST(BuildPairs, TiesBreakBySampleId) {
  const std::vector<GeneratedSample> g{fake("s2", 1), fake("s0", 1), fake("s3", 1), fake("s1", 1)};
  const auto pairs = build_pairs(g, {});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], pair("s0", "s3", PairRule::MINMAX_FALLBACK));
}

TEST(BuildPairs, GroupErrors) {
  std::vector<GeneratedSample> g{fake("a", 1), fake("b", 2), fake("c", 3)};
  EXPECT_THROW(build_pairs(g, {}), GroupingError);
  g.push_back(fake("d", 4, false, "other"));
  EXPECT_THROW(build_pairs(g, {}), GroupingError);
}

TEST(BuildDataset, IncompleteGroupsAreListed) {
  std::vector<GeneratedSample> s{fake("a", 1, false, "p1"), fake("b", 2, false, "p2")};
  try {
    build_dataset(s, {});
    FAIL();
  } catch (const GroupingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p1"), std::string::npos);
    EXPECT_NE(msg.find("p2"), std::string::npos);
  }
}

std::vector<GeneratedSample> corrupted_samples(int n_prompts, Seed seed) {
  const auto prompts = gen_prompts(n_prompts, split(seed, "prompts"));
  std::vector<GeneratedSample> out;
  const CorruptionSpec spec;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      const Seed s = split(split(seed, i), static_cast<std::uint64_t>(k));
      const auto traj = corrupt_trajectory(reference_trajectory(prompts[i], kVocab, split(s, "ref")), spec, prompts[i],
                                           split(s, "corrupt"));
      auto g = score_sample(prompts[i], traj, 0.02, split(s, "noise"));
      g.sample_id = prompts[i].prompt_id + "-v" + std::to_string(k);
      out.push_back(g);
    }
  }
  return out;
}

TEST(BuildDataset, InvariantsOnCorruptedGenerations) {
  const auto samples = corrupted_samples(100, Seed{8});
  const auto ds = build_dataset(samples, {});
  ASSERT_FALSE(ds.pairs.empty());
  auto find = [&](const std::string& id) {
    return *std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s.sample_id == id; });
  };
  for (const auto& p : ds.pairs) {
    const auto c = find(p.chosen_id), r = find(p.rejected_id);
    EXPECT_LE(c.n_errors, r.n_errors);
    EXPECT_NE(p.chosen_id, p.rejected_id);
    EXPECT_EQ(c.prompt_id, p.prompt_id);
    EXPECT_EQ(r.prompt_id, p.prompt_id);
  }
  EXPECT_EQ(ds.stats.n_samples, 400);
  EXPECT_EQ(ds.stats.n_groups, 100);
  EXPECT_EQ(ds.stats.n_pairs, static_cast<int>(ds.pairs.size()));
  int hist = 0, rules = 0;
  for (int h : ds.stats.per_histogram) hist += h;
  for (const auto& [_, n] : ds.stats.pairs_per_rule) rules += n;
  EXPECT_EQ(hist, 400);
  EXPECT_EQ(rules, ds.stats.n_pairs);
  for (const auto& s : samples) EXPECT_DOUBLE_EQ(s.reward, 1.0 - std::min(s.per_raw, 1.0));

  const auto again = build_dataset(corrupted_samples(100, Seed{8}), {});
  EXPECT_EQ(again.pairs, ds.pairs);
}

TEST(BuildDataset, AllCleanEqualErrorsOnlyFallback) {
  std::vector<GeneratedSample> s;
  for (int g = 0; g < 3; ++g)
    for (int k = 3; k >= 0; --k) s.push_back(fake("q" + std::to_string(g) + "-v" + std::to_string(k), 2, false, "q" + std::to_string(g)));
  const auto ds = build_dataset(s, {});
  ASSERT_EQ(ds.pairs.size(), 3u);
  for (const auto& p : ds.pairs) {
    EXPECT_EQ(p.rule, PairRule::MINMAX_FALLBACK);
    EXPECT_EQ(p.chosen_id, p.prompt_id + "-v0");
    EXPECT_EQ(p.rejected_id, p.prompt_id + "-v3");
  }
}

TEST(Persistence, RoundTrip) {
  testing::TempDir dir("prefs");
  const auto samples = corrupted_samples(10, Seed{9});
  save_samples_jsonl(dir.path() / "s.jsonl", samples);
  EXPECT_EQ(load_samples_jsonl(dir.path() / "s.jsonl"), samples);
  const auto ds = build_dataset(samples, {});
  save_preference_dataset(dir.path() / "pairs.jsonl", ds);
  EXPECT_EQ(load_preference_pairs(dir.path() / "pairs.jsonl"), ds.pairs);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "pairs.jsonl.stats.json"));
}

}  // namespace
}  // namespace lyricrl
