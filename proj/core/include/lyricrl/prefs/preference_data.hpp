#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lyricrl/metrics/phoneme_metrics.hpp"
#include "lyricrl/numcore/rng.hpp"
#include "lyricrl/numcore/types.hpp"
#include "lyricrl/task/toy_task.hpp"

namespace lyricrl {

/// One scored generation.
struct GeneratedSample {
  std::string sample_id;
  std::string prompt_id;
  TokenSeq tokens;
  PhonemeSeq hyp_phonemes;
  double per_raw = 0.0;
  int n_errors = 0;
  double reward = 0.0;  // 1 - min(per_raw, 1)
  bool hallucinated = false;

  friend bool operator==(const GeneratedSample&, const GeneratedSample&) = default;
};

enum class PairRule { ERR_DIFF, MINMAX_FALLBACK, HALLUC_CROSS };

std::string to_string(PairRule r);
PairRule pair_rule_from_string(const std::string& s);

struct PreferencePair {
  std::string prompt_id;
  std::string chosen_id;
  std::string rejected_id;
  PairRule rule = PairRule::ERR_DIFF;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct PairingConfig {
  int err_diff_threshold = 8;
  int ins_run = 3;
  int omit = 6;
  int window = 10;
  int group_size = 4;

  /// Thresholds at the full-size song scale (40 / >5 / >10-in-15).
  static PairingConfig paper_scale() { return PairingConfig{40, 5, 10, 15, 4}; }
  /// Thresholds rescaled for 16-48 phoneme lyrics (8 / >3 / >6-in-10).
  static PairingConfig toy_scale() { return PairingConfig{}; }

  HallucinationThresholds thresholds() const { return {ins_run, omit, window}; }
  /// Throws ConfigError on a non-positive field.
  void validate() const;
};

/// Decodes tokens, passes the phonemes through the recognition-noise channel,
/// aligns against the lyric and fills every derived field.
GeneratedSample score_sample(const Prompt& prompt, const TokenSeq& tokens, double noise_rate, Seed seed,
                             const HallucinationThresholds& thresholds = PairingConfig{}.thresholds(),
                             const Vocabulary& vocab = {});

/// Three-step pairing for one prompt's group of generations:
///   1. every pair whose error counts differ by more than the threshold,
///      lower-error side chosen;
///   2. only when steps 1 and 3 yield nothing, the min-PER vs max-PER pair;
///   3. every (non-hallucinated, hallucinated) pair whose error counts do not
///      contradict the orientation.
/// Duplicates keep the strongest tag (HALLUC_CROSS > ERR_DIFF > MINMAX_FALLBACK).
/// Throws GroupingError on a wrong group size or mixed prompt ids.
std::vector<PreferencePair> build_pairs(const std::vector<GeneratedSample>& group, const PairingConfig& cfg);

struct PreferenceStats {
  std::map<std::string, int> pairs_per_rule;
  /// PER histogram in 10 bins of width 0.1 over [0, 1); the last bin also
  /// holds every PER >= 0.9.
  std::array<int, 10> per_histogram{};
  int n_samples = 0;
  int n_groups = 0;
  int n_pairs = 0;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  PreferenceStats stats;
};

/// Groups samples by prompt id (in order of first appearance), pairs each
/// group and collects stats. Throws GroupingError listing every prompt id whose
/// group is incomplete.
PreferenceDataset build_dataset(const std::vector<GeneratedSample>& samples, const PairingConfig& cfg);

/// Writes <path> (JSONL pairs) and <path>.stats.json.
void save_preference_dataset(const std::filesystem::path& path, const PreferenceDataset& ds);
std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path);

void save_samples_jsonl(const std::filesystem::path& path, const std::vector<GeneratedSample>& samples);
std::vector<GeneratedSample> load_samples_jsonl(const std::filesystem::path& path);

}  // namespace lyricrl
