#include "lyricrl/train/trainers.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "lyricrl/numcore/autodiff.hpp"
#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using ScoreFn = std::function<double(const Prompt&, const TokenSeq&, Seed)>;

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(std::string(field) + ": " + what);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

/// Cycles through a shuffled index order, reshuffling at every pass.
class Batcher {
 public:
  Batcher(std::size_t n, Seed seed) : rng_(seed), order_(n) { std::iota(order_.begin(), order_.end(), 0); }

  std::vector<std::size_t> next(int batch) {
    std::vector<std::size_t> out;
    for (int b = 0; b < batch; ++b) {
      if (pos_ == 0) shuffle(order_, rng_);
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<T> pick(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

std::unordered_map<std::string, const Prompt*> index_prompts(const std::vector<Prompt>& prompts) {
  std::unordered_map<std::string, const Prompt*> m;
  for (const auto& p : prompts) m.emplace(p.prompt_id, &p);
  return m;
}

const Prompt& lookup(const std::unordered_map<std::string, const Prompt*>& m, const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) throw ConfigError("unknown prompt id '" + id + "'");
  return *it->second;
}

}  // namespace

void PretrainConfig::validate() const {
  require(steps >= 1, "pretrain.steps", "must be >= 1");
  require(batch >= 1, "pretrain.batch", "must be >= 1");
  require(lr > 0, "pretrain.lr", "must be > 0");
  require(log_every >= 1, "pretrain.log_every", "must be >= 1");
}

void RewardTrainConfig::validate() const {
  require(steps >= 1, "reward_model.steps", "must be >= 1");
  require(batch >= 1, "reward_model.batch", "must be >= 1");
  require(lr > 0, "reward_model.lr", "must be > 0");
  require(log_every >= 1, "reward_model.log_every", "must be >= 1");
}

void ValidationConfig::validate() const {
  require(every >= 1, "eval.every", "must be >= 1");
  require(patience >= 1, "eval.patience", "must be >= 1");
}

void TrainerConfig::validate() const {
  require(max_steps >= 1, "trainer.max_steps", "must be >= 1");
  require(rs_steps >= 0, "trainer.rs_steps", "must be >= 0");
  require(temperature > 0, "trainer.temperature", "must be > 0");
  require(probe_pairs >= 0, "trainer.probe_pairs", "must be >= 0");
  require(probe_every >= 1, "trainer.probe_every", "must be >= 1");
  rs.validate();
  dpo.validate();
  ppo.validate();
  grpo.validate();
  validation.validate();
}

std::string to_string(TrainerKind k) {
  switch (k) {
    case TrainerKind::RS: return "rs";
    case TrainerKind::DPO: return "dpo";
    case TrainerKind::RS_THEN_DPO: return "rs+dpo";
    case TrainerKind::PPO: return "ppo";
    case TrainerKind::GRPO: return "grpo";
  }
  return "?";
}

TrainerKind trainer_kind_from_string(const std::string& s) {
  if (s == "rs") return TrainerKind::RS;
  if (s == "dpo") return TrainerKind::DPO;
  if (s == "rs+dpo" || s == "rs_then_dpo") return TrainerKind::RS_THEN_DPO;
  if (s == "ppo") return TrainerKind::PPO;
  if (s == "grpo") return TrainerKind::GRPO;
  throw ConfigError("trainer.kind: unknown trainer '" + s + "' (expected rs, dpo, rs+dpo, ppo or grpo)");
}

TrainingLog pretrain(ModelHandle& model, const std::vector<CorpusRow>& corpus, const PretrainConfig& cfg,
                     const Vocabulary& vocab, Seed seed) {
  cfg.validate();
  if (corpus.empty()) throw BatchError("pretrain: empty corpus");
  std::vector<SftExample> examples;
  examples.reserve(corpus.size());
  for (const auto& r : corpus) {
    if (!r.tokens.empty()) examples.push_back(SftExample{prompt_tokens(r.prompt, vocab), r.tokens});
  }
  Adam opt(AdamConfig{cfg.lr});
  Batcher batcher(examples.size(), split(seed, "batches"));
  TrainingLog log;
  double acc = 0.0;
  int n = 0;
  for (int s = 1; s <= cfg.steps; ++s) {
    const auto batch = pick(examples, batcher.next(cfg.batch));
    acc += rs_step(model, opt, batch);
    ++n;
    if (s % cfg.log_every == 0 || s == cfg.steps) {
      LogRow row;
      row.step = s;
      row.loss = acc / n;
      log.rows.push_back(row);
      acc = 0.0;
      n = 0;
    }
  }
  return log;
}

TrainingLog train_reward_model(ModelHandle& reward_model, const std::vector<RmExample>& train,
                               const RewardTrainConfig& cfg, Seed seed) {
  cfg.validate();
  if (train.empty()) throw BatchError("train_reward_model: no training examples");
  Adam opt(AdamConfig{cfg.lr});
  Batcher batcher(train.size(), split(seed, "batches"));
  TrainingLog log;
  double acc = 0.0;
  int n = 0;
  for (int s = 1; s <= cfg.steps; ++s) {
    acc += rm_step(reward_model, opt, pick(train, batcher.next(cfg.batch)));
    ++n;
    if (s % cfg.log_every == 0 || s == cfg.steps) {
      LogRow row;
      row.step = s;
      row.loss = acc / n;
      log.rows.push_back(row);
      acc = 0.0;
      n = 0;
    }
  }
  return log;
}

std::vector<RmExample> reward_examples(const std::vector<GeneratedSample>& samples,
                                       const std::vector<Prompt>& prompts, const Vocabulary& vocab) {
  const auto by_id = index_prompts(prompts);
  std::vector<RmExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.tokens.empty()) continue;
    out.push_back(RmExample{prompt_tokens(lookup(by_id, s.prompt_id), vocab), s.tokens, s.reward});
  }
  return out;
}

RolloutBatch collect_rollouts(const ModelHandle& policy, const ModelHandle& reference, const ModelHandle& critic,
                              const ScoreFn& scorer, const std::vector<Prompt>& prompts, const PpoConfig& cfg,
                              const Vocabulary& vocab, double temperature, Seed seed) {
  if (prompts.empty()) throw BatchError("collect_rollouts: no prompts");
  Rng pick_rng(split(seed, "prompts"));
  RolloutBatch batch;
  for (int b = 0; b < cfg.batch; ++b) {
    const auto& p = prompts[static_cast<std::size_t>(pick_rng.uniform_int(0, static_cast<std::int64_t>(prompts.size()) - 1))];
    const Seed s = split(seed, static_cast<std::uint64_t>(b));
    Rollout r;
    r.sample_id = p.prompt_id + "-r" + std::to_string(b);
    r.prompt = prompt_tokens(p, vocab);
    r.tokens = generate_song(policy, p, vocab, temperature, split(s, "sample"));
    if (r.tokens.empty()) continue;
    r.terminal_reward = scorer(p, r.tokens, split(s, "score"));
    r.old_logprobs = sequence_logprobs(policy, r.prompt, r.tokens);
    r.ref_logprobs = sequence_logprobs(reference, r.prompt, r.tokens);
    r.values = value_estimates(critic, r.prompt, r.tokens);
    r.rewards = ppo_token_rewards(r.old_logprobs, r.ref_logprobs, r.terminal_reward, cfg.alpha);
    auto adv = compute_advantages(r.rewards, r.values, cfg.gamma, cfg.lambda);
    r.td_errors = std::move(adv.td_errors);
    r.advantages = std::move(adv.advantages);
    r.returns = std::move(adv.returns);
    batch.samples.push_back(std::move(r));
  }
  batch.validate();
  return batch;
}

GroupBatch collect_group(const ModelHandle& policy, const ModelHandle& reference, const ScoreFn& scorer,
                         const Prompt& prompt, const GrpoConfig& cfg, const Vocabulary& vocab, double temperature,
                         Seed seed) {
  GroupBatch g;
  g.prompt = prompt_tokens(prompt, vocab);
  std::vector<double> rewards;
  for (int k = 0; k < cfg.group_size; ++k) {
    const Seed s = split(seed, static_cast<std::uint64_t>(k));
    GroupSample gs;
    gs.sample_id = prompt.prompt_id + "-g" + std::to_string(k);
    gs.tokens = generate_song(policy, prompt, vocab, temperature, split(s, "sample"));
    if (gs.tokens.empty()) throw BatchError("collect_group: empty generation for " + gs.sample_id);
    gs.reward = scorer(prompt, gs.tokens, split(s, "score"));
    gs.old_logprobs = sequence_logprobs(policy, g.prompt, gs.tokens);
    gs.ref_logprobs = sequence_logprobs(reference, g.prompt, gs.tokens);
    rewards.push_back(gs.reward);
    g.samples.push_back(std::move(gs));
  }
  g.advantages = grpo_advantages(rewards, cfg.use_std);
  g.selected = select_truncated(g, cfg.keep);
  return g;
}

namespace {

struct Probe {
  std::vector<DpoExample> pairs;

  void fill(const ModelHandle& policy, LogRow& row) const {
    if (pairs.empty()) return;
    double c = 0.0;
    double r = 0.0;
    for (const auto& ex : pairs) {
      c += sum(sequence_logprobs(policy, ex.prompt, ex.chosen));
      r += sum(sequence_logprobs(policy, ex.prompt, ex.rejected));
    }
    row.chosen_logprob_sum = c / static_cast<double>(pairs.size());
    row.rejected_logprob_sum = r / static_cast<double>(pairs.size());
  }
};

class Run {
 public:
  Run(const TrainerConfig& cfg, const TrainerEnv& env, Seed seed, const TrainerHooks& hooks)
      : cfg_(cfg), env_(env), seed_(seed), hooks_(hooks) {
    cfg_.validate();
    if (env_.origin == nullptr) throw IoError("trainer: no Origin policy checkpoint");
    if (env_.val_prompts.empty()) throw ConfigError("eval.validation_prompts: no validation prompts");
    policy_ = *env_.origin;
    policy_.role = ModelRole::POLICY;
    policy_.params.zero_grad();
    eval_ = env_.eval;
    eval_.scorer = Scorer::GROUND_TRUTH_PER;
    eval_.reward_model = nullptr;
    eval_.temperature = cfg_.temperature;
  }

  TrainerResult run() {
    switch (cfg_.kind) {
      case TrainerKind::RS: run_rs(); break;
      case TrainerKind::DPO: run_dpo(); break;
      case TrainerKind::RS_THEN_DPO: run_rs_then_dpo(); break;
      case TrainerKind::PPO: run_ppo(); break;
      case TrainerKind::GRPO: run_grpo(); break;
    }
    result_.steps_run = step_;
    return std::move(result_);
  }

 private:
  // ---- bookkeeping --------------------------------------------------------

  void start() {
    LogRow row;
    row.step = 0;
    row.loss = kNaN;
    probe_.fill(policy_, row);
    const BucketReport rep = validate_now(row);
    result_.origin_report = rep;
    result_.best_report = rep;
    result_.best = policy_;
    result_.best_step = 0;
    best_reward_ = rep.mean_reward;
    next_validation_ = cfg_.validation.every;
    if (hooks_.on_new_best) hooks_.on_new_best(result_.best, 0);
    result_.log.rows.push_back(row);
  }

  BucketReport validate_now(LogRow& row) {
    const auto rep = evaluate_policy(policy_, env_.val_prompts, eval_, split(seed_, "validation")).report;
    row.mean_validation_reward = rep.mean_reward;
    row.bucket_low = rep.frac_low;
    row.bucket_mid = rep.frac_mid;
    row.bucket_high = rep.frac_high;
    return rep;
  }

  bool done() const { return stopped_ || step_ >= phase_end_; }

  void after_step(double loss) {
    if (!std::isfinite(loss)) throw NumericalError("loss is not finite at step " + std::to_string(step_ + 1));
    ++step_;
    LogRow row;
    row.step = step_;
    row.loss = loss;
    if (step_ % cfg_.probe_every == 0) probe_.fill(policy_, row);
    if (step_ >= next_validation_) {
      while (next_validation_ <= step_) next_validation_ += cfg_.validation.every;
      const BucketReport rep = validate_now(row);
      if (rep.mean_reward > best_reward_) {
        best_reward_ = rep.mean_reward;
        result_.best = policy_;
        result_.best_step = step_;
        result_.best_report = rep;
        bad_validations_ = 0;
        if (hooks_.on_new_best) hooks_.on_new_best(result_.best, step_);
      } else if (++bad_validations_ >= cfg_.validation.patience) {
        stopped_ = true;
        result_.early_stopped = true;
      }
    }
    result_.log.rows.push_back(row);
  }

  ScoreFn scorer() const {
    if (cfg_.reward_source == Scorer::REWARD_MODEL) {
      if (env_.reward_model == nullptr) throw IoError("trainer: reward-model scoring needs a reward model checkpoint");
      const ModelHandle* rm = env_.reward_model;
      const Vocabulary vocab = eval_.vocab;
      return [rm, vocab](const Prompt& p, const TokenSeq& tokens, Seed) {
        return reward_score_predict(*rm, prompt_tokens(p, vocab), tokens);
      };
    }
    const EvalOptions o = eval_;
    return [o](const Prompt& p, const TokenSeq& tokens, Seed s) {
      return score_sample(p, tokens, o.noise_rate, s, o.thresholds, o.vocab).reward;
    };
  }

  // ---- offline data -------------------------------------------------------

  std::vector<SftExample> chosen_examples() const {
    if (env_.pairs.empty()) throw BatchError("trainer: no preference pairs");
    const auto prompts = index_prompts(env_.train_prompts);
    std::unordered_map<std::string, const GeneratedSample*> samples;
    for (const auto& s : env_.samples) samples.emplace(s.sample_id, &s);
    std::set<std::string> seen;
    std::vector<SftExample> out;
    for (const auto& pr : env_.pairs) {
      if (!seen.insert(pr.chosen_id).second) continue;
      auto it = samples.find(pr.chosen_id);
      if (it == samples.end()) throw ConfigError("pairs reference unknown sample '" + pr.chosen_id + "'");
      if (it->second->tokens.empty()) continue;
      out.push_back(SftExample{prompt_tokens(lookup(prompts, pr.prompt_id), eval_.vocab), it->second->tokens});
    }
    if (out.empty()) throw BatchError("trainer: no usable chosen samples");
    return out;
  }

  std::vector<DpoExample> dpo_examples(const ModelHandle& reference) const {
    if (env_.pairs.empty()) throw BatchError("trainer: no preference pairs");
    const auto prompts = index_prompts(env_.train_prompts);
    std::unordered_map<std::string, const GeneratedSample*> samples;
    for (const auto& s : env_.samples) samples.emplace(s.sample_id, &s);
    auto tokens_of = [&](const std::string& id) -> const TokenSeq& {
      auto it = samples.find(id);
      if (it == samples.end()) throw ConfigError("pairs reference unknown sample '" + id + "'");
      return it->second->tokens;
    };
    std::vector<DpoExample> out;
    for (const auto& pr : env_.pairs) {
      DpoExample ex{prompt_tokens(lookup(prompts, pr.prompt_id), eval_.vocab), tokens_of(pr.chosen_id),
                    tokens_of(pr.rejected_id)};
      if (ex.chosen.empty() || ex.rejected.empty()) continue;
      ex.ref_chosen = sum(sequence_logprobs(reference, ex.prompt, ex.chosen));
      ex.ref_rejected = sum(sequence_logprobs(reference, ex.prompt, ex.rejected));
      out.push_back(std::move(ex));
    }
    if (out.empty()) throw BatchError("trainer: no usable preference pairs");
    return out;
  }

  void set_probe(const std::vector<DpoExample>& pairs) {
    const auto n = std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(cfg_.probe_pairs));
    probe_.pairs.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n));
  }

  // ---- trainers -----------------------------------------------------------

  void rs_phase(int steps) {
    const auto data = chosen_examples();
    Adam opt(AdamConfig{cfg_.rs.lr});
    Batcher batcher(data.size(), split(seed_, "rs_batches"));
    phase_end_ = step_ + steps;
    while (!done()) after_step(rs_step(policy_, opt, pick(data, batcher.next(cfg_.rs.batch))));
  }

  void dpo_phase(const ModelHandle& reference, int steps) {
    const auto data = dpo_examples(reference);
    Adam opt(AdamConfig{cfg_.dpo.lr});
    Batcher batcher(data.size(), split(seed_, "dpo_batches"));
    result_.dpo_phase_start = step_;
    phase_end_ = step_ + steps;
    while (!done()) {
      const auto batch = pick(data, batcher.next(cfg_.dpo.batch_pairs));
      const double loss =
          eval_with_gradients(policy_.params, [&](Tape& t) { return dpo_loss(t, policy_, batch, cfg_.dpo.beta); });
      opt.step(policy_.params);
      after_step(loss);
    }
  }

  void run_rs() {
    if (!env_.pairs.empty()) set_probe(dpo_examples(*env_.origin));
    start();
    rs_phase(cfg_.max_steps);
  }

  void run_dpo() {
    set_probe(dpo_examples(*env_.origin));
    start();
    dpo_phase(*env_.origin, cfg_.max_steps);
  }

  void run_rs_then_dpo() {
    set_probe(dpo_examples(*env_.origin));
    start();
    rs_phase(cfg_.rs_steps);
    // the DPO phase starts fresh: new reference, new patience budget
    stopped_ = false;
    bad_validations_ = 0;
    const ModelHandle reference = clone_frozen(policy_, ModelRole::REFERENCE);
    set_probe(dpo_examples(reference));
    probe_.fill(policy_, result_.log.rows.back());
    dpo_phase(reference, cfg_.max_steps);
  }

  void run_ppo() {
    const ModelHandle reference = clone_frozen(*env_.origin, ModelRole::REFERENCE);
    const ModelHandle& trunk = env_.reward_model != nullptr ? *env_.reward_model : *env_.origin;
    ModelHandle critic = with_head(trunk, HeadKind::VALUE, split(seed_, "critic"));
    const ScoreFn score = scorer();
    Adam policy_opt(AdamConfig{cfg_.ppo.lr});
    Adam critic_opt(AdamConfig{cfg_.ppo.critic_lr});
    start();
    phase_end_ = cfg_.max_steps;
    for (std::uint64_t round = 0; !done(); ++round) {
      const RolloutBatch batch = collect_rollouts(policy_, reference, critic, score, env_.train_prompts, cfg_.ppo,
                                                  eval_.vocab, cfg_.temperature, split(split(seed_, "rollouts"), round));
      if (batch.samples.empty()) throw BatchError("ppo: rollout batch is empty");
      for (int k = 0; k < cfg_.ppo.epochs && !done(); ++k) {
        const double loss = eval_with_gradients(
            policy_.params, [&](Tape& t) { return ppo_policy_loss(t, policy_, batch, cfg_.ppo); });
        policy_opt.step(policy_.params);
        eval_with_gradients(critic.params, [&](Tape& t) { return critic_loss(t, critic, batch); });
        critic_opt.step(critic.params);
        after_step(loss);
      }
    }
  }

  void run_grpo() {
    const ModelHandle reference = clone_frozen(*env_.origin, ModelRole::REFERENCE);
    const ScoreFn score = scorer();
    if (env_.train_prompts.empty()) throw BatchError("grpo: no training prompts");
    Adam opt(AdamConfig{cfg_.grpo.lr});
    Rng pick_rng(split(seed_, "grpo_prompts"));
    start();
    phase_end_ = cfg_.max_steps;
    for (std::uint64_t it = 0; !done(); ++it) {
      std::vector<GroupBatch> groups;
      const Seed round = split(split(seed_, "groups"), it);
      for (int q = 0; q < cfg_.grpo.prompts_per_step; ++q) {
        const auto idx = pick_rng.uniform_int(0, static_cast<std::int64_t>(env_.train_prompts.size()) - 1);
        groups.push_back(collect_group(policy_, reference, score, env_.train_prompts[static_cast<std::size_t>(idx)],
                                       cfg_.grpo, eval_.vocab, cfg_.temperature, split(round, static_cast<std::uint64_t>(q))));
      }
      const double loss =
          eval_with_gradients(policy_.params, [&](Tape& t) { return grpo_loss(t, policy_, groups, cfg_.grpo); });
      opt.step(policy_.params);
      after_step(loss);
    }
  }

  TrainerConfig cfg_;
  const TrainerEnv& env_;
  Seed seed_;
  const TrainerHooks& hooks_;
  EvalOptions eval_;
  ModelHandle policy_;
  TrainerResult result_;
  Probe probe_;
  int step_ = 0;
  int phase_end_ = 0;
  int next_validation_ = 0;
  int bad_validations_ = 0;
  bool stopped_ = false;
  double best_reward_ = 0.0;
};

}  // namespace

TrainerResult run_trainer(const TrainerConfig& cfg, const TrainerEnv& env, Seed seed, const TrainerHooks& hooks) {
  return Run(cfg, env, seed, hooks).run();
}

}  // namespace lyricrl
