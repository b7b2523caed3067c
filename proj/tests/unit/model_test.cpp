#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "lyricrl/model/model.hpp"
#include "lyricrl/numcore/adam.hpp"
#include "lyricrl/numcore/autodiff.hpp"
#include "lyricrl/numcore/errors.hpp"
#include "lyricrl/train/losses.hpp"
#include "support.hpp"

namespace lyricrl {
namespace {

using testing::tiny_config;

void zero_head(ModelHandle& m) {
  m.params.at("head.w").value.setZero();
  m.params.at("head.b").value.setZero();
}

TEST(ModelInit, DeterministicInSeed) {
  const auto a = init_model(tiny_config(), Seed{1});
  const auto b = init_model(tiny_config(), Seed{1});
  const auto c = init_model(tiny_config(), Seed{2});
  EXPECT_TRUE(a.params == b.params);
  EXPECT_FALSE(a.params == c.params);
  EXPECT_TRUE(a.params.all_finite());
}

TEST(ModelInit, InvalidDimsThrow) {
  auto c = tiny_config();
  c.embed_dim = 0;
  EXPECT_THROW(init_model(c, Seed{1}), ConfigError);
  c = tiny_config();
  c.eos_id = 99;
  EXPECT_THROW(init_model(c, Seed{1}), ConfigError);
  c = tiny_config();
  c.content_vocab = 7;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelInit, ScalarHeadsStartAtZero) {
  const auto critic = init_model(tiny_config(HeadKind::VALUE), Seed{3});
  const auto rm = init_model(tiny_config(HeadKind::REWARD), Seed{3});
  EXPECT_EQ(critic.role, ModelRole::CRITIC);
  EXPECT_EQ(rm.role, ModelRole::REWARD_MODEL);
  const std::vector<int> prompt{0, 1}, toks{2, 3, 1};
  for (double v : value_estimates(critic, prompt, toks)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(reward_score_predict(rm, prompt, toks), 0.5);
}

TEST(Layout, PositionsCountContentTokens) {
  const auto c = tiny_config();
  const std::vector<int> prompt{0, 1, 2}, cont{4, 0, 4, 1};
  const auto l = make_layout(c, prompt, cont);
  EXPECT_EQ(l.prompt_len, 3);
  EXPECT_EQ(l.positions, (std::vector<int>{0, 1, 2, 0, 1, 1, 2}));
  EXPECT_EQ(l.segments, (std::vector<int>{0, 0, 0, 1, 1, 1, 1}));
  const std::vector<int> too_long(10, 0);
  EXPECT_THROW(make_layout(c, prompt, too_long), LengthError);
  const std::vector<int> bad{0, 6};
  EXPECT_THROW(make_layout(c, bad, cont), VocabError);
}

TEST(Logprobs, EmptyContinuation) {
  const auto m = init_model(tiny_config(), Seed{4});
  const std::vector<int> prompt{0, 1};
  const auto lp = sequence_logprobs(m, prompt, {});
  EXPECT_TRUE(lp.empty());
  EXPECT_EQ(std::accumulate(lp.begin(), lp.end(), 0.0), 0.0);
}

TEST(Logprobs, UniformHeadGivesLogVocab) {
  auto c = tiny_config();
  c.vocab_size = 4;
  c.content_vocab = 3;
  c.eos_id = 3;
  auto m = init_model(c, Seed{5});
  zero_head(m);
  const std::vector<int> prompt{0, 1}, cont{2, 0, 3};
  for (double lp : sequence_logprobs(m, prompt, cont)) EXPECT_NEAR(lp, -std::log(4.0), 1e-12);
}

TEST(Logprobs, InferenceMatchesTeacherForcedTape) {
  auto m = init_model(tiny_config(), Seed{6});
  const std::vector<int> prompt{0, 3, 1}, cont{2, 4, 1, 0, 5};
  const auto fast = sequence_logprobs(m, prompt, cont);
  Tape t;
  const Matrix& slow = t.value(token_logprobs(t, m, prompt, cont));
  ASSERT_EQ(static_cast<std::size_t>(slow.rows()), fast.size());
  for (std::size_t i = 0; i < fast.size(); ++i) {
    EXPECT_NEAR(fast[i], slow(static_cast<Eigen::Index>(i), 0), 1e-12);
    EXPECT_GT(std::exp(fast[i]), 0.0);
    EXPECT_LT(std::exp(fast[i]), 1.0);
    const std::vector<int> prefix(cont.begin(), cont.begin() + static_cast<long>(i));
    const auto dist = next_token_distribution(m, prompt, prefix);
    EXPECT_NEAR(std::log(dist[static_cast<std::size_t>(cont[i])]), fast[i], 1e-12);
  }
}

TEST(Logprobs, DistributionSumsToOne) {
  const auto m = init_model(tiny_config(), Seed{7});
  const std::vector<int> prompt{1, 2}, prefix{3, 0};
  const auto d = next_token_distribution(m, prompt, prefix);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
  for (double p : d) EXPECT_GE(p, 0.0);
}

TEST(Values, InferenceMatchesTape) {
  auto critic = init_model(tiny_config(HeadKind::VALUE), Seed{8});
  Rng rng(Seed{9});
  for (auto& e : critic.params)
    if (e.name.rfind("head.", 0) == 0)
      for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] = rng.normal();
  const std::vector<int> prompt{0, 1}, toks{2, 4, 3};
  const auto fast = value_estimates(critic, prompt, toks);
  Tape t;
  const Matrix& slow = t.value(values(t, critic, prompt, toks));
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], slow(static_cast<Eigen::Index>(i), 0), 1e-12);
}

TEST(RewardHead, InvariantToPaddingAfterFinalToken) {
  auto rm = init_model(tiny_config(HeadKind::REWARD), Seed{10});
  rm.params.at("head.w").value.setConstant(0.7);
  const std::vector<int> prompt{0, 1};
  const std::vector<int> song{2, 3, 5};
  const std::vector<int> padded{2, 3, 5, 1, 4, 0};
  const double a = reward_score_predict(rm, prompt, song);
  EXPECT_NE(a, 0.5);
  EXPECT_EQ(a, reward_score_predict(rm, prompt, padded));
  Tape t;
  EXPECT_NEAR(t.scalar_value(reward_prediction(t, rm, prompt, song)), a, 1e-12);
}

TEST(Sampling, SameSeedSameSequence) {
  const auto m = init_model(tiny_config(), Seed{11});
  const std::vector<int> prompt{0, 1};
  EXPECT_EQ(sample_sequence(m, prompt, 10, 1.0, Seed{3}), sample_sequence(m, prompt, 10, 1.0, Seed{3}));
  EXPECT_THROW(sample_sequence(m, prompt, 10, 0.0, Seed{3}), DomainError);
}

TEST(Sampling, LowTemperatureMatchesGreedy) {
  const auto m = init_model(tiny_config(), Seed{12});
  const std::vector<int> prompt{3, 2};
  const auto greedy = greedy_decode(m, prompt, 10);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample_sequence(m, prompt, 10, 1e-9, Seed{s}), greedy);
  EXPECT_EQ(greedy, greedy_decode(m, prompt, 10));
}

TEST(Sampling, StopsAtEosAndRespectsContext) {
  const auto m = init_model(tiny_config(), Seed{13});
  const std::vector<int> prompt{0, 1, 2};
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto out = sample_sequence(m, prompt, 100, 1.0, Seed{s});
    EXPECT_LE(out.size(), 9u);
    for (std::size_t i = 0; i + 1 < out.size(); ++i) EXPECT_NE(out[i], 5);
  }
}

TEST(Sampling, HandSetCategoricalFrequency) {
  auto c = tiny_config();
  c.eos_id = -1;
  auto m = init_model(c, Seed{14});
  zero_head(m);
  auto& b = m.params.at("head.b").value;
  b.setConstant(-1e9);
  b(0, 1) = std::log(0.75);
  b(0, 2) = std::log(0.25);
  const std::vector<int> prompt{0};
  int ones = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto out = sample_sequence(m, prompt, 1, 1.0, split(Seed{77}, s));
    ASSERT_EQ(out.size(), 1u);
    ASSERT_TRUE(out[0] == 1 || out[0] == 2);
    ones += out[0] == 1;
  }
  EXPECT_NEAR(ones / 1000.0, 0.75, 0.04);
}

TEST(Frozen, CloneIsBitExactAndUntouchedByTraining) {
  auto policy = init_model(tiny_config(), Seed{15});
  const auto ref = clone_frozen(policy);
  EXPECT_EQ(ref.role, ModelRole::REFERENCE);
  EXPECT_TRUE(ref.frozen());
  EXPECT_TRUE(ref.params == policy.params);
  const ParamSet before = ref.params;
  Adam opt({.lr = 1e-2});
  const std::vector<SftExample> batch{{{0, 1}, {2, 3, 5}}};
  rs_step(policy, opt, batch);
  EXPECT_FALSE(ref.params == policy.params);
  EXPECT_TRUE(ref.params == before);
  auto old = clone_frozen(policy, ModelRole::OLD_POLICY);
  EXPECT_THROW(rs_step(old, opt, batch), ConfigError);
}

TEST(WithHead, CopiesTrunkOnly) {
  const auto lm = init_model(tiny_config(), Seed{16});
  const auto critic = with_head(lm, HeadKind::VALUE, Seed{17});
  EXPECT_EQ(critic.config.head_kind, HeadKind::VALUE);
  for (const auto& e : lm.params) {
    if (e.name.rfind("head.", 0) == 0) continue;
    EXPECT_TRUE(e.value == critic.params.at(e.name).value) << e.name;
  }
  EXPECT_EQ(critic.params.at("head.w").value.cols(), 1);
}

TEST(SaveLoad, RoundTrip) {
  testing::TempDir dir("model");
  const auto m = init_model(tiny_config(HeadKind::REWARD), Seed{18});
  const auto path = (dir.path() / "rm.ckpt").string();
  save_model(path, m);
  const auto back = load_model(path, ModelRole::REWARD_MODEL);
  EXPECT_EQ(back.config, m.config);
  EXPECT_TRUE(back.params == m.params);
}

}  // namespace
}  // namespace lyricrl
