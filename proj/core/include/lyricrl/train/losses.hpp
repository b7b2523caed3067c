#pragma once

#include <span>
#include <string>
#include <vector>

#include "lyricrl/model/model.hpp"
#include "lyricrl/numcore/adam.hpp"
#include "lyricrl/numcore/tape.hpp"
#include "lyricrl/numcore/types.hpp"

namespace lyricrl {

// ---- configs ---------------------------------------------------------------

/// Learning rates default to 5e-5, i.e. 5e-7 scaled by 100 for a model this small.
struct RsConfig {
  double lr = 5e-5;
  int batch = 8;
  void validate() const;
};

struct DpoConfig {
  double beta = 0.3;
  double lr = 5e-5;
  int batch_pairs = 3;
  void validate() const;
};

struct PpoConfig {
  double alpha = 0.0005;  // KL weight inside the per-token reward
  double gamma = 1.0;
  double lambda = 1.0;
  double epsilon = 0.2;
  /// Weight on the per-token entropy estimate mean(-log p); positive values
  /// reward higher entropy.
  double entropy_weight = 0.0;
  int epochs = 4;
  int batch = 16;
  double lr = 5e-5;
  double critic_lr = 5e-5;
  /// Ratio as logpi / logpi_old instead of exp(logpi - logpi_old). Debug only.
  bool literal_log_ratio = false;
  void validate() const;
};

struct GrpoConfig {
  double kl_beta = 0.0;
  double epsilon = 0.2;
  int group_size = 8;
  int keep = 4;  // top keep/2 and bottom keep/2
  int prompts_per_step = 4;
  bool token_level_loss = false;
  bool kl_literal_plus_one = false;
  bool use_std = false;
  double lr = 5e-5;
  void validate() const;
};

// ---- examples and batches -------------------------------------------------

/// A (prompt, continuation) pair trained by likelihood.
struct SftExample {
  TokenSeq prompt;
  TokenSeq tokens;
};

/// One preference pair with its reference sequence log-probs precomputed.
struct DpoExample {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

struct RmExample {
  TokenSeq prompt;
  TokenSeq tokens;
  double target = 0.0;
};

struct Rollout {
  std::string sample_id;
  TokenSeq prompt;
  TokenSeq tokens;
  std::vector<double> old_logprobs;
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  double terminal_reward = 0.0;
  std::vector<double> rewards;
  std::vector<double> td_errors;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct RolloutBatch {
  std::vector<Rollout> samples;
  /// Throws ShapeError on inconsistent per-sample lengths, NumericalError on a
  /// non-finite advantage.
  void validate() const;
  std::size_t num_tokens() const;
};

struct GroupSample {
  std::string sample_id;
  TokenSeq tokens;
  std::vector<double> old_logprobs;
  std::vector<double> ref_logprobs;
  double reward = 0.0;
};

struct GroupBatch {
  TokenSeq prompt;
  std::vector<GroupSample> samples;
  std::vector<double> advantages;
  std::vector<int> selected;
};

// ---- scalar pieces ---------------------------------------------------------

/// r(t) = alpha * (ref(t) - old(t)); the last token also gets terminal_reward.
/// Throws ShapeError on a length mismatch.
std::vector<double> ppo_token_rewards(std::span<const double> old_logprobs, std::span<const double> ref_logprobs,
                                      double terminal_reward, double alpha);

struct AdvantageResult {
  std::vector<double> td_errors;
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r(t) + gamma V(t+1) - V(t) with V past the end taken as 0;
/// A_t = sum_k (gamma lambda)^k delta_{t+k}; returns = A + V.
AdvantageResult compute_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda);

/// A_i = R_i - mean(R), divided by max(std, 1e-8) when use_std is set.
/// Throws GroupError for fewer than 2 rewards.
std::vector<double> grpo_advantages(std::span<const double> rewards, bool use_std = false);

/// Indices of the keep/2 lowest and keep/2 highest rewards under the order
/// (reward, sample_id), returned ascending. Throws GroupError when the group
/// has fewer than `keep` members.
std::vector<int> select_truncated(std::span<const double> rewards, std::span<const std::string> sample_ids,
                                  int keep = 4);
std::vector<int> select_truncated(const GroupBatch& group, int keep = 4);

/// rho - log rho - 1 with rho = exp(ref - policy); "+ 1" in literal mode.
double kl_k3(double policy_logprob, double ref_logprob, bool literal_plus_one = false);

/// -log sigmoid(beta * margin).
double dpo_loss_from_margin(double margin, double beta);

// ---- differentiable losses ------------------------------------------------

/// Mean negative log-likelihood over every target token. Throws BatchError on
/// an empty batch.
Var rs_loss(Tape& tape, ModelHandle& policy, std::span<const SftExample> batch);

/// Mean over pairs of -log sigmoid(beta * margin), sequence log-probs summed
/// over tokens. Throws BatchError on an empty batch.
Var dpo_loss(Tape& tape, ModelHandle& policy, std::span<const DpoExample> batch, double beta);

/// Loss value for a single pair against a reference model.
double dpo_loss(ModelHandle& policy, const ModelHandle& reference, const DpoExample& pair, double beta);

/// Mean |sigmoid prediction - target|.
Var rm_loss(Tape& tape, ModelHandle& reward_model, std::span<const RmExample> batch);

/// Mean over tokens of -min(rho A, clip(rho, 1-eps, 1+eps) A) minus
/// entropy_weight * mean(-log p). Throws NumericalError on a non-finite ratio.
Var ppo_policy_loss(Tape& tape, ModelHandle& policy, const RolloutBatch& batch, const PpoConfig& cfg);

/// Mean over tokens of (V(t) - return_t)^2.
Var critic_loss(Tape& tape, ModelHandle& critic, const RolloutBatch& batch);

/// Clipped surrogate over the selected samples of each group plus
/// kl_beta * mean K3 against the reference log-probs stored in the group.
Var grpo_loss(Tape& tape, ModelHandle& policy, std::span<const GroupBatch> groups, const GrpoConfig& cfg);

// ---- single optimizer steps -----------------------------------------------

/// One Adam step on rs_loss; returns the loss before the step.
double rs_step(ModelHandle& policy, Adam& opt, std::span<const SftExample> batch);
/// One Adam step on rm_loss; returns the loss before the step.
double rm_step(ModelHandle& reward_model, Adam& opt, std::span<const RmExample> batch);

/// Mean |prediction - target| through the inference path.
double reward_l1(const ModelHandle& reward_model, std::span<const RmExample> examples);

}  // namespace lyricrl
