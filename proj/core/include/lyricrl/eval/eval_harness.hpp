#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lyricrl/model/model.hpp"
#include "lyricrl/prefs/preference_data.hpp"
#include "lyricrl/task/toy_task.hpp"

namespace lyricrl {

/// Reward distribution over a validation run. Buckets: low r < 0.7,
/// mid 0.7 <= r <= 0.8, high r > 0.8.
struct BucketReport {
  double mean_reward = 0.0;
  double frac_low = 0.0;
  double frac_mid = 0.0;
  double frac_high = 0.0;
  double halluc_rate = 0.0;
  int n = 0;
};

inline constexpr double kLowBucketBelow = 0.7;
inline constexpr double kHighBucketAbove = 0.8;

BucketReport bucket_report(const std::vector<GeneratedSample>& samples);

enum class Scorer { GROUND_TRUTH_PER, REWARD_MODEL };

struct EvalOptions {
  int samples_per_prompt = 4;
  Scorer scorer = Scorer::GROUND_TRUTH_PER;
  const ModelHandle* reward_model = nullptr;  // required for REWARD_MODEL
  double noise_rate = 0.0;
  double temperature = 1.0;
  HallucinationThresholds thresholds = PairingConfig{}.thresholds();
  Vocabulary vocab{};
};

struct EvalResult {
  BucketReport report;
  /// Per-sample records; with the REWARD_MODEL scorer `reward` holds the
  /// prediction while per_raw / n_errors / hallucinated stay ground truth.
  std::vector<GeneratedSample> records;
};

/// Produces one song for a prompt; lets non-model policies be evaluated.
using Generator = std::function<TokenSeq(const Prompt&, Seed)>;

/// Deterministic in seed. Sample k of prompt i uses a seed derived from (seed, i, k).
EvalResult evaluate_generator(const Generator& gen, const std::vector<Prompt>& prompts, const EvalOptions& opts,
                              Seed seed);
EvalResult evaluate_policy(const ModelHandle& policy, const std::vector<Prompt>& prompts, const EvalOptions& opts,
                           Seed seed);

/// Samples one song from the policy for `prompt` using the full remaining context.
TokenSeq generate_song(const ModelHandle& policy, const Prompt& prompt, const Vocabulary& vocab, double temperature,
                       Seed seed);

struct FieldDelta {
  double absolute = 0.0;
  /// (after - before) / before; 0 when before is 0 and nothing changed, inf otherwise.
  double relative = 0.0;
};

struct ReportDeltas {
  FieldDelta mean_reward;
  FieldDelta frac_low;
  FieldDelta frac_mid;
  FieldDelta frac_high;
  FieldDelta halluc_rate;
};

/// Throws ComparabilityError when the sample counts differ.
ReportDeltas compare_reports(const BucketReport& before, const BucketReport& after);

// ---- training curves -----------------------------------------------------

/// One logged training step. Validation columns are NaN on steps without a
/// validation pass; logprob columns are NaN for trainers without preference pairs.
struct LogRow {
  int step = 0;
  double loss = 0.0;
  double mean_validation_reward = std::numeric_limits<double>::quiet_NaN();
  double bucket_low = std::numeric_limits<double>::quiet_NaN();
  double bucket_mid = std::numeric_limits<double>::quiet_NaN();
  double bucket_high = std::numeric_limits<double>::quiet_NaN();
  double chosen_logprob_sum = std::numeric_limits<double>::quiet_NaN();
  double rejected_logprob_sum = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingLog {
  std::vector<LogRow> rows;

  static const std::vector<std::string>& columns();
  /// CSV with a header row; NaN cells are written empty. Values use 17
  /// significant digits so the file is a pure function of the run.
  void save_csv(const std::filesystem::path& path) const;
  static TrainingLog load_csv(const std::filesystem::path& path);
};

/// Writes one CSV (step,value) per non-empty series and, when svg is set, a
/// matching SVG line chart built from plain path elements. Returns the files
/// written. Throws DomainError on an empty log, IoError on write failure.
std::vector<std::filesystem::path> export_curves(const TrainingLog& log, const std::filesystem::path& dir,
                                                 bool svg = true);

void save_report_json(const std::filesystem::path& path, const BucketReport& report);
BucketReport load_report_json(const std::filesystem::path& path);

/// CSV columns: sample_id,reward,per_raw,hallucinated.
void save_distribution_csv(const std::filesystem::path& path, const std::vector<GeneratedSample>& records);

}  // namespace lyricrl
