#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "lyricrl/model/model.hpp"
#include "lyricrl/prefs/preference_data.hpp"
#include "lyricrl/task/toy_task.hpp"
#include "lyricrl/train/trainers.hpp"

namespace lyricrl::cli {

struct TaskSection {
  Vocabulary vocab;
  CorruptionSpec corruption;
  int corpus_prompts = 2000;
  int train_prompts = 100;
  int rm_prompts = 600;
  int rm_heldout_prompts = 500;
  int samples_per_prompt = 4;
  double noise_rate = 0.02;
};

struct ModelSection {
  int embed_dim = 32;
  int num_layers = 2;
  int context_len = 160;
  int mlp_dim = 64;
};

struct EvalSection {
  int validation_prompts = 90;
  int samples_per_prompt = 4;
  int every = 50;
  int patience = 10;
};

/// Everything a command needs. Vocabulary-dependent model fields (vocab size,
/// content range, stop token) are derived from the task section.
struct RunConfig {
  std::uint64_t seed = 42;
  /// Empty: a timestamped directory under $LYRICRL_OUTPUT_ROOT (default "runs").
  std::string output_dir;
  TaskSection task;
  ModelSection model;
  PretrainConfig pretrain;
  RewardTrainConfig reward_model;
  PairingConfig pairing;
  TrainerConfig trainer;
  EvalSection eval;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  ModelConfig model_config(HeadKind head = HeadKind::LM) const;
  EvalOptions eval_options() const;
  ValidationConfig validation() const { return {eval.every, eval.patience}; }

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys and wrong types throw
  /// ConfigError with the dotted key path.
  static RunConfig from_json(const nlohmann::json& j);
  /// Digest of the canonical JSON form.
  std::uint64_t hash() const;
};

/// Applies "a.b.c=value" overrides to a JSON document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Recursively overlays `patch` onto `base`.
void merge_json(nlohmann::json& base, const nlohmann::json& patch);

/// Defaults, then the optional file, then overrides; validated.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace lyricrl::cli
