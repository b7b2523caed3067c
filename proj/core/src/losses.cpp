#include "lyricrl/train/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lyricrl/numcore/autodiff.hpp"
#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(std::string(field) + ": " + what);
}

Matrix column(std::span<const double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

void require_tokens(const TokenSeq& tokens, const char* who) {
  if (tokens.empty()) throw ShapeError(std::string(who) + ": empty continuation");
}

// -min(rho * a, clip(rho) * a) per element; `adv` is a column matching rho.
Var clipped_surrogate(Tape& t, Var rho, Var adv, double eps) {
  const Var s1 = t.mul(rho, adv);
  const Var s2 = t.mul(t.clamp(rho, 1.0 - eps, 1.0 + eps), adv);
  return t.minimum(s1, s2);
}

void check_ratio(const Tape& t, Var rho) {
  if (!t.value(rho).allFinite()) throw NumericalError("policy ratio is not finite");
}

}  // namespace

void RsConfig::validate() const {
  require(lr > 0, "trainer.rs.lr", "must be > 0");
  require(batch >= 1, "trainer.rs.batch", "must be >= 1");
}

void DpoConfig::validate() const {
  require(beta > 0, "trainer.dpo.beta", "must be > 0");
  require(lr > 0, "trainer.dpo.lr", "must be > 0");
  require(batch_pairs >= 1, "trainer.dpo.batch_pairs", "must be >= 1");
}

void PpoConfig::validate() const {
  require(alpha >= 0, "trainer.ppo.alpha", "must be >= 0");
  require(gamma > 0 && gamma <= 1, "trainer.ppo.gamma", "must lie in (0, 1]");
  require(lambda > 0 && lambda <= 1, "trainer.ppo.lambda", "must lie in (0, 1]");
  require(epsilon > 0 && epsilon < 1, "trainer.ppo.epsilon", "must lie in (0, 1)");
  require(entropy_weight >= 0, "trainer.ppo.entropy_weight", "must be >= 0");
  require(epochs >= 1, "trainer.ppo.epochs", "must be >= 1");
  require(batch >= 1, "trainer.ppo.batch", "must be >= 1");
  require(lr > 0, "trainer.ppo.lr", "must be > 0");
  require(critic_lr > 0, "trainer.ppo.critic_lr", "must be > 0");
}

void GrpoConfig::validate() const {
  require(kl_beta >= 0, "trainer.grpo.kl_beta", "must be >= 0");
  require(epsilon > 0 && epsilon < 1, "trainer.grpo.epsilon", "must lie in (0, 1)");
  require(group_size >= 2, "trainer.grpo.group_size", "must be >= 2");
  require(keep >= 2 && keep % 2 == 0, "trainer.grpo.keep", "must be an even number >= 2");
  require(keep <= group_size, "trainer.grpo.keep", "must not exceed group_size");
  require(prompts_per_step >= 1, "trainer.grpo.prompts_per_step", "must be >= 1");
  require(lr > 0, "trainer.grpo.lr", "must be > 0");
}

void RolloutBatch::validate() const {
  for (const auto& s : samples) {
    const auto n = s.tokens.size();
    if (s.old_logprobs.size() != n || s.ref_logprobs.size() != n || s.values.size() != n || s.rewards.size() != n ||
        s.td_errors.size() != n || s.advantages.size() != n || s.returns.size() != n) {
      throw ShapeError("rollout " + s.sample_id + ": per-token arrays disagree in length");
    }
    for (double a : s.advantages) {
      if (!std::isfinite(a)) throw NumericalError("rollout " + s.sample_id + ": non-finite advantage");
    }
  }
}

std::size_t RolloutBatch::num_tokens() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.tokens.size();
  return n;
}

std::vector<double> ppo_token_rewards(std::span<const double> old_logprobs, std::span<const double> ref_logprobs,
                                      double terminal_reward, double alpha) {
  if (old_logprobs.size() != ref_logprobs.size()) {
    throw ShapeError("ppo_token_rewards: " + std::to_string(old_logprobs.size()) + " policy vs " +
                     std::to_string(ref_logprobs.size()) + " reference log-probs");
  }
  std::vector<double> r(old_logprobs.size());
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = alpha * (ref_logprobs[t] - old_logprobs[t]);
  if (!r.empty()) r.back() += terminal_reward;
  return r;
}

AdvantageResult compute_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda) {
  if (rewards.size() != values.size()) throw ShapeError("compute_advantages: rewards and values differ in length");
  const std::size_t n = rewards.size();
  AdvantageResult out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  double next_value = 0.0;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    out.td_errors[k] = rewards[k] + gamma * next_value - values[k];
    running = out.td_errors[k] + gamma * lambda * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

std::vector<double> grpo_advantages(std::span<const double> rewards, bool use_std) {
  if (rewards.size() < 2) throw GroupError("grpo_advantages: group needs at least 2 rewards");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  // a flat group carries no signal; skip the mean so rounding cannot leak through
  if (*lo == *hi) return std::vector<double>(rewards.size(), 0.0);
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> a(rewards.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rewards[i] - mean;
  if (use_std) {
    double var = 0.0;
    for (double x : a) var += x * x;
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    for (double& x : a) x /= sd;
  }
  return a;
}

std::vector<int> select_truncated(std::span<const double> rewards, std::span<const std::string> sample_ids, int keep) {
  if (rewards.size() != sample_ids.size()) throw ShapeError("select_truncated: rewards and ids differ in length");
  if (keep < 2 || keep % 2 != 0) throw GroupError("select_truncated: keep must be an even number >= 2");
  const int g = static_cast<int>(rewards.size());
  if (g < keep) {
    throw GroupError("select_truncated: group of " + std::to_string(g) + " is smaller than " + std::to_string(keep));
  }
  std::vector<int> order(static_cast<std::size_t>(g));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rewards[a] != rewards[b]) return rewards[a] < rewards[b];
    return sample_ids[a] < sample_ids[b];
  });
  std::vector<int> out(order.begin(), order.begin() + keep / 2);
  out.insert(out.end(), order.end() - keep / 2, order.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> select_truncated(const GroupBatch& group, int keep) {
  std::vector<double> r;
  std::vector<std::string> ids;
  for (const auto& s : group.samples) {
    r.push_back(s.reward);
    ids.push_back(s.sample_id);
  }
  return select_truncated(r, ids, keep);
}

double kl_k3(double policy_logprob, double ref_logprob, bool literal_plus_one) {
  const double log_rho = ref_logprob - policy_logprob;
  return std::exp(log_rho) - log_rho + (literal_plus_one ? 1.0 : -1.0);
}

double dpo_loss_from_margin(double margin, double beta) {
  const double z = beta * margin;
  // -log sigmoid(z) = log(1 + e^-z)
  return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

Var rs_loss(Tape& t, ModelHandle& policy, std::span<const SftExample> batch) {
  if (batch.empty()) throw BatchError("rs_loss: empty batch");
  std::vector<Var> parts;
  parts.reserve(batch.size());
  for (const auto& ex : batch) {
    require_tokens(ex.tokens, "rs_loss");
    parts.push_back(token_logprobs(t, policy, ex.prompt, ex.tokens));
  }
  return t.neg(t.mean(t.concat_rows(parts)));
}

Var dpo_loss(Tape& t, ModelHandle& policy, std::span<const DpoExample> batch, double beta) {
  if (batch.empty()) throw BatchError("dpo_loss: empty batch");
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (const auto& ex : batch) {
    require_tokens(ex.chosen, "dpo_loss");
    require_tokens(ex.rejected, "dpo_loss");
    const Var chosen = t.sum(token_logprobs(t, policy, ex.prompt, ex.chosen));
    const Var rejected = t.sum(token_logprobs(t, policy, ex.prompt, ex.rejected));
    const Var margin = t.add_scalar(t.sub(chosen, rejected), -(ex.ref_chosen - ex.ref_rejected));
    losses.push_back(t.neg(t.log_sigmoid(t.scale(margin, beta))));
  }
  return t.mean(t.concat_rows(losses));
}

double dpo_loss(ModelHandle& policy, const ModelHandle& reference, const DpoExample& pair, double beta) {
  DpoExample ex = pair;
  auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  ex.ref_chosen = sum(sequence_logprobs(reference, ex.prompt, ex.chosen));
  ex.ref_rejected = sum(sequence_logprobs(reference, ex.prompt, ex.rejected));
  return eval_loss([&](Tape& t) { return dpo_loss(t, policy, std::span<const DpoExample>(&ex, 1), beta); });
}

Var rm_loss(Tape& t, ModelHandle& reward_model, std::span<const RmExample> batch) {
  if (batch.empty()) throw BatchError("rm_loss: empty batch");
  std::vector<Var> errs;
  errs.reserve(batch.size());
  for (const auto& ex : batch) {
    require_tokens(ex.tokens, "rm_loss");
    errs.push_back(t.abs(t.add_scalar(reward_prediction(t, reward_model, ex.prompt, ex.tokens), -ex.target)));
  }
  return t.mean(t.concat_rows(errs));
}

Var ppo_policy_loss(Tape& t, ModelHandle& policy, const RolloutBatch& batch, const PpoConfig& cfg) {
  if (batch.samples.empty()) throw BatchError("ppo_policy_loss: empty batch");
  std::vector<Var> lps;
  std::vector<double> old;
  std::vector<double> adv;
  for (const auto& s : batch.samples) {
    require_tokens(s.tokens, "ppo_policy_loss");
    lps.push_back(token_logprobs(t, policy, s.prompt, s.tokens));
    old.insert(old.end(), s.old_logprobs.begin(), s.old_logprobs.end());
    adv.insert(adv.end(), s.advantages.begin(), s.advantages.end());
  }
  const Var lp = t.concat_rows(lps);
  if (t.value(lp).rows() != static_cast<Eigen::Index>(old.size())) {
    throw ShapeError("ppo_policy_loss: old log-probs do not match the token count");
  }
  Var rho;
  if (cfg.literal_log_ratio) {
    rho = t.mul(lp, t.constant(column(old).cwiseInverse()));
  } else {
    rho = t.exp(t.sub(lp, t.constant(column(old))));
  }
  check_ratio(t, rho);
  Var loss = t.neg(t.mean(clipped_surrogate(t, rho, t.constant(column(adv)), cfg.epsilon)));
  if (cfg.entropy_weight != 0.0) {
    // entropy estimate mean(-log p) enters with a minus sign
    loss = t.add(loss, t.scale(t.mean(lp), cfg.entropy_weight));
  }
  return loss;
}

Var critic_loss(Tape& t, ModelHandle& critic, const RolloutBatch& batch) {
  if (batch.samples.empty()) throw BatchError("critic_loss: empty batch");
  std::vector<Var> vs;
  std::vector<double> ret;
  for (const auto& s : batch.samples) {
    require_tokens(s.tokens, "critic_loss");
    vs.push_back(values(t, critic, s.prompt, s.tokens));
    ret.insert(ret.end(), s.returns.begin(), s.returns.end());
  }
  return t.mean(t.square(t.sub(t.concat_rows(vs), t.constant(column(ret)))));
}

Var grpo_loss(Tape& t, ModelHandle& policy, std::span<const GroupBatch> groups, const GrpoConfig& cfg) {
  std::vector<Var> surr;  // per sequence (sequence mode) or per token (token mode)
  std::vector<Var> kl;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.samples.size()) throw ShapeError("grpo_loss: advantages do not match the group");
    for (int i : g.selected) {
      if (i < 0 || i >= static_cast<int>(g.samples.size())) throw GroupError("grpo_loss: selected index out of range");
      const auto& s = g.samples[static_cast<std::size_t>(i)];
      require_tokens(s.tokens, "grpo_loss");
      if (s.old_logprobs.size() != s.tokens.size() || s.ref_logprobs.size() != s.tokens.size()) {
        throw ShapeError("grpo_loss: sample " + s.sample_id + " log-prob arrays disagree with its tokens");
      }
      const Var lp = token_logprobs(t, policy, g.prompt, s.tokens);
      const Var rho = t.exp(t.sub(lp, t.constant(column(s.old_logprobs))));
      check_ratio(t, rho);
      const Matrix a = Matrix::Constant(static_cast<Eigen::Index>(s.tokens.size()), 1, g.advantages[i]);
      const Var per_token = clipped_surrogate(t, rho, t.constant(a), cfg.epsilon);
      surr.push_back(cfg.token_level_loss ? per_token : t.mean(per_token));
      if (cfg.kl_beta != 0.0) {
        const Var log_rho = t.sub(t.constant(column(s.ref_logprobs)), lp);
        const Var k3 = t.add_scalar(t.sub(t.exp(log_rho), log_rho), cfg.kl_literal_plus_one ? 1.0 : -1.0);
        kl.push_back(cfg.token_level_loss ? k3 : t.mean(k3));
      }
    }
  }
  if (surr.empty()) throw BatchError("grpo_loss: no selected samples");
  Var loss = t.neg(t.mean(t.concat_rows(surr)));
  if (!kl.empty()) loss = t.add(loss, t.scale(t.mean(t.concat_rows(kl)), cfg.kl_beta));
  return loss;
}

double rs_step(ModelHandle& policy, Adam& opt, std::span<const SftExample> batch) {
  if (policy.frozen()) throw ConfigError("rs_step: policy is frozen");
  const double loss = eval_with_gradients(policy.params, [&](Tape& t) { return rs_loss(t, policy, batch); });
  opt.step(policy.params);
  return loss;
}

double rm_step(ModelHandle& reward_model, Adam& opt, std::span<const RmExample> batch) {
  const double loss = eval_with_gradients(reward_model.params, [&](Tape& t) { return rm_loss(t, reward_model, batch); });
  opt.step(reward_model.params);
  return loss;
}

double reward_l1(const ModelHandle& reward_model, std::span<const RmExample> examples) {
  if (examples.empty()) throw BatchError("reward_l1: no examples");
  double total = 0.0;
  for (const auto& ex : examples) total += std::abs(reward_score_predict(reward_model, ex.prompt, ex.tokens) - ex.target);
  return total / static_cast<double>(examples.size());
}

}  // namespace lyricrl
