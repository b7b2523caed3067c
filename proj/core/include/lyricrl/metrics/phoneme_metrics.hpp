#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lyricrl/numcore/rng.hpp"
#include "lyricrl/numcore/types.hpp"

namespace lyricrl {

enum class EditOp : std::uint8_t { MATCH, SUB, INS, DEL };

/// One step of an alignment. For INS, ref_pos is the number of reference
/// symbols consumed before the insertion (the slot it is anchored to); for
/// DEL, hyp_pos is defined symmetrically.
struct AlignedOp {
  EditOp op;
  int ref_pos;
  int hyp_pos;

  friend bool operator==(const AlignedOp&, const AlignedOp&) = default;
};

struct AlignmentResult {
  std::vector<AlignedOp> ops;
  int n_sub = 0;
  int n_ins = 0;
  int n_del = 0;
  int distance = 0;
};

/// Unit-cost Levenshtein alignment with a full op trace. The backtrace
/// prefers MATCH/SUB, then DEL, then INS, so traces are deterministic.
AlignmentResult align(const PhonemeSeq& ref, const PhonemeSeq& hyp);

/// Applies the op trace to `ref`; for a valid alignment the result equals hyp.
PhonemeSeq replay(const AlignmentResult& a, const PhonemeSeq& ref, const PhonemeSeq& hyp);

/// distance / len(ref); may exceed 1. Throws EmptyReferenceError on empty ref.
double per(const PhonemeSeq& ref, const PhonemeSeq& hyp);

/// 1 - min(per, 1). Throws DomainError for negative or NaN input.
double reward_from_per(double per_value);

struct ErrorSegments {
  /// (ref_pos, run_length) for each maximal run of consecutive insertions.
  std::vector<std::pair<int, int>> insertion_runs;
  /// Max deletions over all windows of `window` consecutive reference positions.
  int window_omissions = 0;
  int window = 15;

  int longest_insertion_run() const;
};

ErrorSegments error_segments(const AlignmentResult& a, int ref_len, int window = 15);

struct HallucinationThresholds {
  int ins_run = 5;
  int omit = 10;
  int window = 15;
};

/// True iff some insertion run is longer than ins_run or some window holds
/// more than omit deletions. Both comparisons are strict. Throws DomainError
/// for non-positive thresholds or a window that differs from segs.window.
bool classify_hallucinated(const ErrorSegments& segs, const HallucinationThresholds& thresholds = {});

/// Convenience: derives the segments with thresholds.window and classifies.
bool classify_hallucinated(const AlignmentResult& a, int ref_len, const HallucinationThresholds& thresholds = {});

/// Substitution-only noise channel standing in for recognition errors: each
/// phoneme is independently replaced, with probability `rate`, by a uniformly
/// chosen different phoneme. Throws DomainError unless rate is in [0, 0.5].
PhonemeSeq simulate_asr_noise(const PhonemeSeq& hyp, double rate, Seed seed, int phoneme_vocab = 24);

}  // namespace lyricrl
