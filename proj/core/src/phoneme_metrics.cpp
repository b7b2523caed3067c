#include "lyricrl/metrics/phoneme_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

AlignmentResult align(const PhonemeSeq& ref, const PhonemeSeq& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<int> dp((n + 1) * w);
  auto at = [&](std::size_t i, std::size_t j) -> int& { return dp[i * w + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  AlignmentResult r;
  r.distance = at(n, m);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i - 1, j - 1) + (same ? 0 : 1) == at(i, j)) {
        --i;
        --j;
        r.ops.push_back({same ? EditOp::MATCH : EditOp::SUB, static_cast<int>(i), static_cast<int>(j)});
        if (!same) ++r.n_sub;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j) + 1 == at(i, j)) {
      --i;
      r.ops.push_back({EditOp::DEL, static_cast<int>(i), static_cast<int>(j)});
      ++r.n_del;
      continue;
    }
    --j;
    r.ops.push_back({EditOp::INS, static_cast<int>(i), static_cast<int>(j)});
    ++r.n_ins;
  }
  std::reverse(r.ops.begin(), r.ops.end());
  return r;
}

PhonemeSeq replay(const AlignmentResult& a, const PhonemeSeq& ref, const PhonemeSeq& hyp) {
  PhonemeSeq out;
  for (const auto& op : a.ops) {
    switch (op.op) {
      case EditOp::MATCH: out.push_back(ref.at(static_cast<std::size_t>(op.ref_pos))); break;
      case EditOp::SUB:
      case EditOp::INS: out.push_back(hyp.at(static_cast<std::size_t>(op.hyp_pos))); break;
      case EditOp::DEL: break;
    }
  }
  return out;
}

double per(const PhonemeSeq& ref, const PhonemeSeq& hyp) {
  if (ref.empty()) throw EmptyReferenceError("per: reference is empty");
  return static_cast<double>(align(ref, hyp).distance) / static_cast<double>(ref.size());
}

double reward_from_per(double per_value) {
  if (std::isnan(per_value) || per_value < 0.0) {
    throw DomainError("reward_from_per: PER must be >= 0, got " + std::to_string(per_value));
  }
  return 1.0 - std::min(per_value, 1.0);
}

int ErrorSegments::longest_insertion_run() const {
  int best = 0;
  for (const auto& [pos, len] : insertion_runs) best = std::max(best, len);
  return best;
}

ErrorSegments error_segments(const AlignmentResult& a, int ref_len, int window) {
  if (window <= 0) throw DomainError("error_segments: window must be positive");
  ErrorSegments s;
  s.window = window;
  std::vector<int> del_at(static_cast<std::size_t>(std::max(ref_len, 0)), 0);
  for (std::size_t k = 0; k < a.ops.size();) {
    const auto& op = a.ops[k];
    if (op.op == EditOp::INS) {
      std::size_t e = k;
      while (e < a.ops.size() && a.ops[e].op == EditOp::INS && a.ops[e].ref_pos == op.ref_pos) ++e;
      s.insertion_runs.emplace_back(op.ref_pos, static_cast<int>(e - k));
      k = e;
      continue;
    }
    if (op.op == EditOp::DEL) {
      if (op.ref_pos < 0 || op.ref_pos >= ref_len) throw DomainError("error_segments: alignment exceeds ref_len");
      ++del_at[static_cast<std::size_t>(op.ref_pos)];
    }
    ++k;
  }
  // Sliding window sum; a reference shorter than the window is one window.
  const int span = std::min(window, ref_len);
  int cur = 0;
  for (int p = 0; p < ref_len; ++p) {
    cur += del_at[static_cast<std::size_t>(p)];
    if (p >= span) cur -= del_at[static_cast<std::size_t>(p - span)];
    s.window_omissions = std::max(s.window_omissions, cur);
  }
  return s;
}

bool classify_hallucinated(const ErrorSegments& segs, const HallucinationThresholds& t) {
  if (t.ins_run <= 0 || t.omit <= 0 || t.window <= 0) throw DomainError("classify_hallucinated: thresholds must be positive");
  if (t.window != segs.window) throw DomainError("classify_hallucinated: segments computed with a different window");
  return segs.longest_insertion_run() > t.ins_run || segs.window_omissions > t.omit;
}

bool classify_hallucinated(const AlignmentResult& a, int ref_len, const HallucinationThresholds& t) {
  if (t.window <= 0) throw DomainError("classify_hallucinated: thresholds must be positive");
  return classify_hallucinated(error_segments(a, ref_len, t.window), t);
}

PhonemeSeq simulate_asr_noise(const PhonemeSeq& hyp, double rate, Seed seed, int phoneme_vocab) {
  if (!(rate >= 0.0 && rate <= 0.5)) throw DomainError("simulate_asr_noise: rate must lie in [0, 0.5]");
  if (phoneme_vocab < 2) throw DomainError("simulate_asr_noise: need at least two phonemes");
  PhonemeSeq out = hyp;
  if (rate == 0.0) return out;
  Rng rng(seed);
  for (int& p : out) {
    if (rng.bernoulli(rate)) {
      const auto r = static_cast<int>(rng.uniform_int(0, phoneme_vocab - 2));
      p = r >= p ? r + 1 : r;
    }
  }
  return out;
}

}  // namespace lyricrl
