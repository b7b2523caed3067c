#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lyricrl/eval/eval_harness.hpp"
#include "lyricrl/model/model.hpp"
#include "lyricrl/prefs/preference_data.hpp"
#include "lyricrl/task/toy_task.hpp"
#include "lyricrl/train/losses.hpp"

namespace lyricrl {

// ---- supervised stages -----------------------------------------------------

struct PretrainConfig {
  int steps = 3000;
  int batch = 8;
  double lr = 3e-3;
  int log_every = 50;
  void validate() const;
};

/// Likelihood training on corpus rows; one log row every log_every steps.
TrainingLog pretrain(ModelHandle& model, const std::vector<CorpusRow>& corpus, const PretrainConfig& cfg,
                     const Vocabulary& vocab, Seed seed);

struct RewardTrainConfig {
  int steps = 1500;
  int batch = 16;
  double lr = 1e-3;
  int log_every = 50;
  void validate() const;
};

/// L1 regression of the reward head onto sample rewards.
TrainingLog train_reward_model(ModelHandle& reward_model, const std::vector<RmExample>& train,
                               const RewardTrainConfig& cfg, Seed seed);

/// Reward-model examples for scored samples; prompt ids must resolve in `prompts`.
std::vector<RmExample> reward_examples(const std::vector<GeneratedSample>& samples,
                                       const std::vector<Prompt>& prompts, const Vocabulary& vocab);

// ---- preference and on-policy trainers ------------------------------------

enum class TrainerKind { RS, DPO, RS_THEN_DPO, PPO, GRPO };

std::string to_string(TrainerKind k);
/// Accepts rs, dpo, rs+dpo (or rs_then_dpo), ppo, grpo.
TrainerKind trainer_kind_from_string(const std::string& s);

struct ValidationConfig {
  int every = 50;
  int patience = 10;
  void validate() const;
};

struct TrainerConfig {
  TrainerKind kind = TrainerKind::DPO;
  int max_steps = 1000;
  /// Length of the RS phase for RS_THEN_DPO; max_steps covers the DPO phase.
  int rs_steps = 200;
  RsConfig rs;
  DpoConfig dpo;
  PpoConfig ppo;
  GrpoConfig grpo;
  ValidationConfig validation;
  /// Reward source for on-policy sampling.
  Scorer reward_source = Scorer::REWARD_MODEL;
  double temperature = 1.0;
  /// Preference pairs whose summed log-probs are logged every probe_every steps.
  int probe_pairs = 32;
  int probe_every = 10;
  void validate() const;
};

/// Everything a trainer reads. Pointers are borrowed.
struct TrainerEnv {
  const ModelHandle* origin = nullptr;        // starting policy and reference
  const ModelHandle* reward_model = nullptr;  // on-policy scoring and critic trunk
  std::vector<Prompt> train_prompts;
  std::vector<Prompt> val_prompts;
  std::vector<GeneratedSample> samples;  // offline generations for RS / DPO
  std::vector<PreferencePair> pairs;
  /// Validation scoring (ground truth); samples_per_prompt, noise, thresholds.
  EvalOptions eval;
};

struct TrainerResult {
  TrainingLog log;
  ModelHandle best;
  int best_step = 0;
  BucketReport origin_report;
  BucketReport best_report;
  int steps_run = 0;
  bool early_stopped = false;
  /// First step of the DPO phase for RS_THEN_DPO, 0 for DPO, -1 otherwise.
  int dpo_phase_start = -1;
};

struct TrainerHooks {
  /// Called whenever a validation sets a new best (including step 0).
  std::function<void(const ModelHandle& best, int step)> on_new_best;
};

/// Runs one trainer from the Origin policy. Validation happens at step 0 and
/// whenever the step count crosses a multiple of validation.every; the best
/// validation checkpoint is kept. Throws IoError/ConfigError on missing inputs
/// and NumericalError on a non-finite loss, after on_new_best has seen the
/// last good checkpoint.
TrainerResult run_trainer(const TrainerConfig& cfg, const TrainerEnv& env, Seed seed, const TrainerHooks& hooks = {});

// ---- on-policy batch builders (exposed for tests) --------------------------

/// Samples cfg.batch prompts, generates with `policy` and scores, then fills
/// old/ref log-probs, values, rewards and advantages.
RolloutBatch collect_rollouts(const ModelHandle& policy, const ModelHandle& reference, const ModelHandle& critic,
                              const std::function<double(const Prompt&, const TokenSeq&, Seed)>& scorer,
                              const std::vector<Prompt>& prompts, const PpoConfig& cfg, const Vocabulary& vocab,
                              double temperature, Seed seed);

GroupBatch collect_group(const ModelHandle& policy, const ModelHandle& reference,
                         const std::function<double(const Prompt&, const TokenSeq&, Seed)>& scorer,
                         const Prompt& prompt, const GrpoConfig& cfg, const Vocabulary& vocab, double temperature,
                         Seed seed);

}  // namespace lyricrl
