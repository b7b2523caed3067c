#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "lyricrl/metrics/phoneme_metrics.hpp"
#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {
namespace {

// Plain recursive edit distance, no tables.
int brute_distance(const PhonemeSeq& a, std::size_t i, const PhonemeSeq& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  const int diag = brute_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const int del = brute_distance(a, i + 1, b, j) + 1;
  const int ins = brute_distance(a, i, b, j + 1) + 1;
  return std::min({diag, del, ins});
}

std::vector<PhonemeSeq> all_sequences(int max_len, int alphabet) {
  std::vector<PhonemeSeq> out{{}};
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (static_cast<int>(out[k].size()) == max_len) continue;
    for (int s = 0; s < alphabet; ++s) {
      auto next = out[k];
      next.push_back(s);
      out.push_back(next);
    }
  }
  return out;
}

PhonemeSeq random_seq(Rng& rng, int max_len, int alphabet) {
  PhonemeSeq s(static_cast<std::size_t>(rng.uniform_int(0, max_len)));
  for (int& x : s) x = static_cast<int>(rng.uniform_int(0, alphabet - 1));
  return s;
}

void expect_consistent(const PhonemeSeq& ref, const PhonemeSeq& hyp, const AlignmentResult& a) {
  EXPECT_EQ(a.distance, a.n_sub + a.n_ins + a.n_del);
  EXPECT_EQ(replay(a, ref, hyp), hyp);
}

TEST(Align, Identity) {
  const PhonemeSeq s{1, 2, 3};
  const auto a = align(s, s);
  EXPECT_EQ(a.distance, 0);
  EXPECT_EQ(a.ops.size(), 3u);
  for (const auto& op : a.ops) EXPECT_EQ(op.op, EditOp::MATCH);
}

TEST(Align, SingleDeletion) {
  const PhonemeSeq ref{1, 2, 3, 4}, hyp{1, 3, 4};
  const auto a = align(ref, hyp);
  EXPECT_EQ(a.distance, 1);
  EXPECT_EQ(a.n_del, 1);
  const auto del = std::find_if(a.ops.begin(), a.ops.end(), [](const AlignedOp& o) { return o.op == EditOp::DEL; });
  ASSERT_NE(del, a.ops.end());
  EXPECT_EQ(del->ref_pos, 1);
  expect_consistent(ref, hyp, a);
}

TEST(Align, KittenSitting) {
  const PhonemeSeq ref{5, 1, 7, 7, 2, 8}, hyp{9, 1, 7, 7, 1, 8, 6};
  const auto a = align(ref, hyp);
  EXPECT_EQ(a.distance, 3);
  EXPECT_EQ(a.distance, brute_distance(ref, 0, hyp, 0));
  expect_consistent(ref, hyp, a);
}

TEST(Align, EmptySides) {
  const PhonemeSeq s{4, 5};
  EXPECT_EQ(align({}, s).n_ins, 2);
  EXPECT_EQ(align(s, {}).n_del, 2);
  EXPECT_EQ(align({}, {}).distance, 0);
}

TEST(Align, MatchesExhaustiveOracleOnShortSequences) {
  const auto seqs = all_sequences(4, 3);
  for (const auto& r : seqs)
    for (const auto& h : seqs) {
      const auto a = align(r, h);
      ASSERT_EQ(a.distance, brute_distance(r, 0, h, 0));
      ASSERT_EQ(a.distance, a.n_sub + a.n_ins + a.n_del);
      ASSERT_EQ(replay(a, r, h), h);
    }
}

TEST(Align, MetricProperties) {
  Rng rng(Seed{31});
  for (int trial = 0; trial < 2000; ++trial) {
    const auto x = random_seq(rng, 12, 4), y = random_seq(rng, 12, 4), z = random_seq(rng, 12, 4);
    const int xy = align(x, y).distance, yx = align(y, x).distance;
    EXPECT_EQ(xy, yx);
    EXPECT_LE(align(x, z).distance, xy + align(y, z).distance);
    EXPECT_EQ(xy == 0, x == y);
  }
}

TEST(Per, Examples) {
  EXPECT_EQ(per({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(per({1, 2, 3, 4}, {1, 3, 4}), 0.25);
  EXPECT_EQ(per({1, 2, 3}, {1, 2, 3, 1, 2, 3}), 1.0);
  EXPECT_EQ(per({1}, {2, 2, 2}), 3.0);
  EXPECT_THROW(per({}, {1}), EmptyReferenceError);
}

TEST(RewardFromPer, Examples) {
  EXPECT_EQ(reward_from_per(0.0), 1.0);
  EXPECT_NEAR(reward_from_per(0.229), 0.771, 1e-12);
  EXPECT_EQ(reward_from_per(1.7), 0.0);
  EXPECT_EQ(reward_from_per(1.0), 0.0);
  EXPECT_THROW(reward_from_per(-0.1), DomainError);
  EXPECT_THROW(reward_from_per(std::numeric_limits<double>::quiet_NaN()), DomainError);
}

TEST(ErrorSegments, PerfectAlignment) {
  const PhonemeSeq s{1, 2, 3, 4, 5};
  const auto seg = error_segments(align(s, s), 5);
  EXPECT_TRUE(seg.insertion_runs.empty());
  EXPECT_EQ(seg.window_omissions, 0);
}

TEST(ErrorSegments, InsertionRun) {
  const PhonemeSeq ref{1, 2, 3, 4};
  const PhonemeSeq hyp{1, 2, 0, 0, 0, 0, 0, 0, 3, 4};
  const auto seg = error_segments(align(ref, hyp), 4);
  ASSERT_EQ(seg.insertion_runs.size(), 1u);
  EXPECT_EQ(seg.insertion_runs[0], std::make_pair(2, 6));
  EXPECT_EQ(seg.longest_insertion_run(), 6);
}

PhonemeSeq iota_seq(int n) {
  PhonemeSeq s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = i % 24;
  return s;
}

TEST(ErrorSegments, WindowOmissions) {
  const auto ref = iota_seq(20);
  PhonemeSeq hyp(ref.begin(), ref.begin() + 2);
  hyp.insert(hyp.end(), ref.begin() + 13, ref.end());
  const auto seg = error_segments(align(ref, hyp), 20);
  EXPECT_EQ(seg.window_omissions, 11);
  EXPECT_LE(seg.window_omissions, seg.window);
}

TEST(ErrorSegments, OmissionsSpreadBeyondWindow) {
  // 12 deletions, every other position over 24: at most 8 share a 15-window
  const auto ref = iota_seq(24);
  PhonemeSeq hyp;
  for (int i = 0; i < 24; i += 2) hyp.push_back(ref[static_cast<std::size_t>(i)]);
  const auto seg = error_segments(align(ref, hyp), 24);
  EXPECT_EQ(seg.window_omissions, 8);
}

TEST(Classify, Thresholds) {
  ErrorSegments six;
  six.insertion_runs = {{3, 6}};
  EXPECT_TRUE(classify_hallucinated(six));
  ErrorSegments five;
  five.insertion_runs = {{3, 5}, {9, 2}};
  EXPECT_FALSE(classify_hallucinated(five));
  ErrorSegments omit;
  omit.window_omissions = 11;
  EXPECT_TRUE(classify_hallucinated(omit));
  omit.window_omissions = 10;
  EXPECT_FALSE(classify_hallucinated(omit));
  EXPECT_THROW(classify_hallucinated(omit, {0, 10, 15}), DomainError);
  EXPECT_THROW(classify_hallucinated(omit, {5, 10, 10}), DomainError);
}

TEST(Classify, FromAlignment) {
  const auto ref = iota_seq(20);
  PhonemeSeq hyp(ref.begin(), ref.begin() + 2);
  hyp.insert(hyp.end(), ref.begin() + 13, ref.end());
  EXPECT_TRUE(classify_hallucinated(align(ref, hyp), 20));
  EXPECT_FALSE(classify_hallucinated(align(ref, ref), 20));
}

TEST(AsrNoise, ZeroRateIsIdentity) {
  const auto s = iota_seq(30);
  EXPECT_EQ(simulate_asr_noise(s, 0.0, Seed{1}), s);
}

TEST(AsrNoise, SubstitutesAtRate) {
  const auto s = iota_seq(40);
  int changed = 0, total = 0;
  for (std::uint64_t k = 0; k < 500; ++k) {
    const auto n = simulate_asr_noise(s, 0.1, Seed{k});
    ASSERT_EQ(n.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      ASSERT_GE(n[i], 0);
      ASSERT_LT(n[i], 24);
      changed += n[i] != s[i];
      ++total;
    }
  }
  // sd of the rate over 20000 draws is about 0.002
  EXPECT_NEAR(changed / double(total), 0.1, 0.01);
  EXPECT_EQ(simulate_asr_noise(s, 0.3, Seed{5}), simulate_asr_noise(s, 0.3, Seed{5}));
  EXPECT_THROW(simulate_asr_noise(s, 0.6, Seed{1}), DomainError);
  EXPECT_THROW(simulate_asr_noise(s, -0.1, Seed{1}), DomainError);
}

}  // namespace
}  // namespace lyricrl
