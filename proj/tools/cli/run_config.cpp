#include "run_config.hpp"

#include <fstream>
#include <set>

#include "lyricrl/numcore/errors.hpp"
#include "lyricrl/numcore/rng.hpp"

namespace lyricrl::cli {

using nlohmann::json;

namespace {

std::string scorer_name(Scorer s) { return s == Scorer::REWARD_MODEL ? "reward_model" : "ground_truth"; }

Scorer scorer_from_name(const std::string& s, const std::string& field) {
  if (s == "reward_model") return Scorer::REWARD_MODEL;
  if (s == "ground_truth") return Scorer::GROUND_TRUTH_PER;
  throw ConfigError(field + ": expected \"reward_model\" or \"ground_truth\", got \"" + s + "\"");
}

/// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError(field(key) + ": expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(field(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(field(key) + ": expected a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  void get_range(const char* key, std::pair<int, int>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() || !(*it)[1].is_number_integer()) {
      throw ConfigError(field(key) + ": expected [min, max]");
    }
    out = {(*it)[0].get<int>(), (*it)[1].get<int>()};
  }

  /// Child object; an absent key yields an empty section.
  Section child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty() : *it, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key().c_str()) + ": unknown key");
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json adam_like(double lr, int batch, const char* batch_key) { return {{"lr", lr}, {batch_key, batch}}; }

}  // namespace

void RunConfig::validate() const {
  task.vocab.validate();
  task.corruption.validate();
  auto need = [](bool ok, const std::string& field, const char* what) {
    if (!ok) throw ConfigError(field + ": " + what);
  };
  need(task.corpus_prompts >= 1, "task.corpus_prompts", "must be >= 1");
  need(task.train_prompts >= 1, "task.train_prompts", "must be >= 1");
  need(task.rm_prompts >= 1, "task.rm_prompts", "must be >= 1");
  need(task.rm_heldout_prompts >= 1, "task.rm_heldout_prompts", "must be >= 1");
  need(task.samples_per_prompt >= 2, "task.samples_per_prompt", "must be >= 2");
  need(task.samples_per_prompt == pairing.group_size, "task.samples_per_prompt", "must equal pairing.group_size");
  need(task.noise_rate >= 0 && task.noise_rate <= 0.5, "task.noise_rate", "must lie in [0, 0.5]");
  need(eval.validation_prompts >= 1, "eval.validation_prompts", "must be >= 1");
  need(eval.samples_per_prompt >= 1, "eval.samples_per_prompt", "must be >= 1");
  model_config().validate();
  pretrain.validate();
  reward_model.validate();
  pairing.validate();
  trainer.validate();
  validation().validate();
}

ModelConfig RunConfig::model_config(HeadKind head) const {
  ModelConfig c;
  c.vocab_size = task.vocab.size();
  c.content_vocab = task.vocab.phoneme_vocab;
  c.eos_id = task.vocab.eos();
  c.embed_dim = model.embed_dim;
  c.num_layers = model.num_layers;
  c.context_len = model.context_len;
  c.mlp_dim = model.mlp_dim;
  c.head_kind = head;
  return c;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.samples_per_prompt = eval.samples_per_prompt;
  o.noise_rate = task.noise_rate;
  o.temperature = trainer.temperature;
  o.thresholds = pairing.thresholds();
  o.vocab = task.vocab;
  return o;
}

json RunConfig::to_json() const {
  const auto& c = task.corruption;
  const auto& t = trainer;
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"task",
       {{"phoneme_vocab", task.vocab.phoneme_vocab},
        {"corruption",
         {{"p_clean", c.p_clean},
          {"p_insert", c.p_insert},
          {"p_omit", c.p_omit},
          {"p_truncate", c.p_truncate},
          {"insert_run_range", {c.insert_run_range.first, c.insert_run_range.second}},
          {"omit_span_range", {c.omit_span_range.first, c.omit_span_range.second}},
          {"style_echo_share", c.style_echo_share}}},
        {"corpus_prompts", task.corpus_prompts},
        {"train_prompts", task.train_prompts},
        {"rm_prompts", task.rm_prompts},
        {"rm_heldout_prompts", task.rm_heldout_prompts},
        {"samples_per_prompt", task.samples_per_prompt},
        {"noise_rate", task.noise_rate}}},
      {"model",
       {{"embed_dim", model.embed_dim},
        {"num_layers", model.num_layers},
        {"context_len", model.context_len},
        {"mlp_dim", model.mlp_dim}}},
      {"pretrain", {{"steps", pretrain.steps}, {"batch", pretrain.batch}, {"lr", pretrain.lr}, {"log_every", pretrain.log_every}}},
      {"reward_model",
       {{"steps", reward_model.steps},
        {"batch", reward_model.batch},
        {"lr", reward_model.lr},
        {"log_every", reward_model.log_every}}},
      {"pairing",
       {{"err_diff_threshold", pairing.err_diff_threshold},
        {"ins_run", pairing.ins_run},
        {"omit", pairing.omit},
        {"window", pairing.window},
        {"group_size", pairing.group_size}}},
      {"trainer",
       {{"kind", to_string(t.kind)},
        {"max_steps", t.max_steps},
        {"rs_steps", t.rs_steps},
        {"reward_source", scorer_name(t.reward_source)},
        {"temperature", t.temperature},
        {"probe_pairs", t.probe_pairs},
        {"probe_every", t.probe_every},
        {"rs", adam_like(t.rs.lr, t.rs.batch, "batch")},
        {"dpo", {{"beta", t.dpo.beta}, {"lr", t.dpo.lr}, {"batch_pairs", t.dpo.batch_pairs}}},
        {"ppo",
         {{"alpha", t.ppo.alpha},
          {"gamma", t.ppo.gamma},
          {"lambda", t.ppo.lambda},
          {"epsilon", t.ppo.epsilon},
          {"entropy_weight", t.ppo.entropy_weight},
          {"epochs", t.ppo.epochs},
          {"batch", t.ppo.batch},
          {"lr", t.ppo.lr},
          {"critic_lr", t.ppo.critic_lr},
          {"literal_log_ratio", t.ppo.literal_log_ratio}}},
        {"grpo",
         {{"kl_beta", t.grpo.kl_beta},
          {"epsilon", t.grpo.epsilon},
          {"group_size", t.grpo.group_size},
          {"keep", t.grpo.keep},
          {"prompts_per_step", t.grpo.prompts_per_step},
          {"token_level_loss", t.grpo.token_level_loss},
          {"kl_literal_plus_one", t.grpo.kl_literal_plus_one},
          {"use_std", t.grpo.use_std},
          {"lr", t.grpo.lr}}}}},
      {"eval",
       {{"validation_prompts", eval.validation_prompts},
        {"samples_per_prompt", eval.samples_per_prompt},
        {"every", eval.every},
        {"patience", eval.patience}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  Section task = root.child("task");
  task.get("phoneme_vocab", c.task.vocab.phoneme_vocab);
  Section corr = task.child("corruption");
  corr.get("p_clean", c.task.corruption.p_clean);
  corr.get("p_insert", c.task.corruption.p_insert);
  corr.get("p_omit", c.task.corruption.p_omit);
  corr.get("p_truncate", c.task.corruption.p_truncate);
  corr.get_range("insert_run_range", c.task.corruption.insert_run_range);
  corr.get_range("omit_span_range", c.task.corruption.omit_span_range);
  corr.get("style_echo_share", c.task.corruption.style_echo_share);
  corr.finish();
  task.get("corpus_prompts", c.task.corpus_prompts);
  task.get("train_prompts", c.task.train_prompts);
  task.get("rm_prompts", c.task.rm_prompts);
  task.get("rm_heldout_prompts", c.task.rm_heldout_prompts);
  task.get("samples_per_prompt", c.task.samples_per_prompt);
  task.get("noise_rate", c.task.noise_rate);
  task.finish();

  Section model = root.child("model");
  model.get("embed_dim", c.model.embed_dim);
  model.get("num_layers", c.model.num_layers);
  model.get("context_len", c.model.context_len);
  model.get("mlp_dim", c.model.mlp_dim);
  model.finish();

  Section pre = root.child("pretrain");
  pre.get("steps", c.pretrain.steps);
  pre.get("batch", c.pretrain.batch);
  pre.get("lr", c.pretrain.lr);
  pre.get("log_every", c.pretrain.log_every);
  pre.finish();

  Section rm = root.child("reward_model");
  rm.get("steps", c.reward_model.steps);
  rm.get("batch", c.reward_model.batch);
  rm.get("lr", c.reward_model.lr);
  rm.get("log_every", c.reward_model.log_every);
  rm.finish();

  Section pair = root.child("pairing");
  pair.get("err_diff_threshold", c.pairing.err_diff_threshold);
  pair.get("ins_run", c.pairing.ins_run);
  pair.get("omit", c.pairing.omit);
  pair.get("window", c.pairing.window);
  pair.get("group_size", c.pairing.group_size);
  pair.finish();

  Section tr = root.child("trainer");
  auto& t = c.trainer;
  std::string kind = to_string(t.kind);
  tr.get("kind", kind);
  t.kind = trainer_kind_from_string(kind);
  tr.get("max_steps", t.max_steps);
  tr.get("rs_steps", t.rs_steps);
  std::string source = scorer_name(t.reward_source);
  tr.get("reward_source", source);
  t.reward_source = scorer_from_name(source, "trainer.reward_source");
  tr.get("temperature", t.temperature);
  tr.get("probe_pairs", t.probe_pairs);
  tr.get("probe_every", t.probe_every);
  Section rs = tr.child("rs");
  rs.get("lr", t.rs.lr);
  rs.get("batch", t.rs.batch);
  rs.finish();
  Section dpo = tr.child("dpo");
  dpo.get("beta", t.dpo.beta);
  dpo.get("lr", t.dpo.lr);
  dpo.get("batch_pairs", t.dpo.batch_pairs);
  dpo.finish();
  Section ppo = tr.child("ppo");
  ppo.get("alpha", t.ppo.alpha);
  ppo.get("gamma", t.ppo.gamma);
  ppo.get("lambda", t.ppo.lambda);
  ppo.get("epsilon", t.ppo.epsilon);
  ppo.get("entropy_weight", t.ppo.entropy_weight);
  ppo.get("epochs", t.ppo.epochs);
  ppo.get("batch", t.ppo.batch);
  ppo.get("lr", t.ppo.lr);
  ppo.get("critic_lr", t.ppo.critic_lr);
  ppo.get("literal_log_ratio", t.ppo.literal_log_ratio);
  ppo.finish();
  Section grpo = tr.child("grpo");
  grpo.get("kl_beta", t.grpo.kl_beta);
  grpo.get("epsilon", t.grpo.epsilon);
  grpo.get("group_size", t.grpo.group_size);
  grpo.get("keep", t.grpo.keep);
  grpo.get("prompts_per_step", t.grpo.prompts_per_step);
  grpo.get("token_level_loss", t.grpo.token_level_loss);
  grpo.get("kl_literal_plus_one", t.grpo.kl_literal_plus_one);
  grpo.get("use_std", t.grpo.use_std);
  grpo.get("lr", t.grpo.lr);
  grpo.finish();
  tr.finish();

  Section ev = root.child("eval");
  ev.get("validation_prompts", c.eval.validation_prompts);
  ev.get("samples_per_prompt", c.eval.samples_per_prompt);
  ev.get("every", c.eval.every);
  ev.get("patience", c.eval.patience);
  ev.finish();

  root.finish();
  c.trainer.validation = c.validation();
  c.validate();
  return c;
}

std::uint64_t RunConfig::hash() const { return mix64(hash_name(to_json().dump())); }

void merge_json(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      merge_json(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + part + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = RunConfig{}.to_json();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    json file = json::parse(f, nullptr, false);
    if (file.is_discarded()) throw ConfigError(path + ": not valid JSON");
    if (!file.is_object()) throw ConfigError(path + ": top level must be an object");
    merge_json(doc, file);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

}  // namespace lyricrl::cli
