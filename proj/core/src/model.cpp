#include "lyricrl/model/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "lyricrl/numcore/checkpoint.hpp"
#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

std::string block_name(int layer, const char* leaf) { return "block" + std::to_string(layer) + "." + leaf; }

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

RowVector rms_norm(const RowVector& x, const Matrix& gain) {
  const double inv = 1.0 / std::sqrt(x.squaredNorm() / static_cast<double>(x.size()) + 1e-5);
  return (x * inv).cwiseProduct(gain.row(0));
}

RowVector apply_head(const ModelHandle& m, const RowVector& hidden) {
  return hidden * m.params.at("head.w").value + m.params.at("head.b").value.row(0);
}

int head_cols(const ModelConfig& c) { return c.head_kind == HeadKind::LM ? c.vocab_size : 1; }

void check_prompt(std::span<const int> prompt) {
  if (prompt.empty()) throw LengthError("prompt must contain at least one token");
}

/// Key/value-cached forward pass, one token at a time. Mirrors forward_hidden.
class Decoder {
 public:
  explicit Decoder(const ModelHandle& m) : m_(m), d_(m.config.embed_dim) {
    const auto& c = m.config;
    for (int l = 0; l < c.num_layers; ++l) {
      keys_.push_back(Matrix::Zero(c.context_len, d_));
      vals_.push_back(Matrix::Zero(c.context_len, d_));
    }
  }

  int length() const { return len_; }

  /// Appends one token and returns its final normalized hidden state.
  RowVector step(int id, int pos, int seg) {
    const auto& c = m_.config;
    const auto& p = m_.params;
    if (len_ >= c.context_len) throw LengthError("sequence exceeds context length");
    RowVector x = p.at("tok_emb").value.row(id) + p.at("pos_emb").value.row(pos) + p.at("seg_emb").value.row(seg);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
    for (int l = 0; l < c.num_layers; ++l) {
      const RowVector h = rms_norm(x, p.at(block_name(l, "norm1")).value);
      const RowVector q = h * p.at(block_name(l, "wq")).value;
      keys_[l].row(len_) = h * p.at(block_name(l, "wk")).value;
      vals_[l].row(len_) = h * p.at(block_name(l, "wv")).value;
      Eigen::VectorXd scores = keys_[l].topRows(len_ + 1) * q.transpose() * scale;
      scores = (scores.array() - scores.maxCoeff()).exp().matrix();
      scores /= scores.sum();
      const RowVector att = scores.transpose() * vals_[l].topRows(len_ + 1);
      x += att * p.at(block_name(l, "wo")).value;
      const RowVector h2 = rms_norm(x, p.at(block_name(l, "norm2")).value);
      RowVector a = h2 * p.at(block_name(l, "w1")).value + p.at(block_name(l, "b1")).value.row(0);
      a = a.array().tanh().matrix();
      x += a * p.at(block_name(l, "w2")).value + p.at(block_name(l, "b2")).value.row(0);
    }
    ++len_;
    return rms_norm(x, p.at("final_norm").value);
  }

 private:
  const ModelHandle& m_;
  int d_;
  int len_ = 0;
  std::vector<Matrix> keys_;
  std::vector<Matrix> vals_;
};

/// Runs the decoder over prompt+continuation, returning hidden states for the
/// positions that predict each continuation token (prompt_len-1 .. L-2) and the
/// final position.
struct HiddenRun {
  std::vector<RowVector> predictive;  // size T
  RowVector last;
};

HiddenRun run_hidden(const ModelHandle& m, std::span<const int> prompt, std::span<const int> continuation) {
  check_prompt(prompt);
  const SequenceLayout lay = make_layout(m.config, prompt, continuation);
  Decoder dec(m);
  HiddenRun out;
  const auto n = lay.ids.size();
  out.predictive.reserve(continuation.size());
  for (std::size_t i = 0; i < n; ++i) {
    RowVector h = dec.step(lay.ids[i], lay.positions[i], lay.segments[i]);
    if (i + 1 >= static_cast<std::size_t>(lay.prompt_len) && i + 1 < n) out.predictive.push_back(h);
    if (i + 1 == n) out.last = std::move(h);
  }
  return out;
}

std::vector<double> log_softmax(const RowVector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = logits(i) - lse;
  return out;
}

std::span<const int> through_first_eos(const ModelConfig& c, std::span<const int> tokens) {
  if (c.eos_id < 0) return tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == c.eos_id) return tokens.first(i + 1);
  }
  return tokens;
}

int continuation_position(const ModelConfig& c, int counter) { return std::min(counter, c.context_len - 1); }

}  // namespace

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::LM: return "lm";
    case HeadKind::VALUE: return "value";
    case HeadKind::REWARD: return "reward";
  }
  return "?";
}

std::string to_string(ModelRole r) {
  switch (r) {
    case ModelRole::POLICY: return "policy";
    case ModelRole::REFERENCE: return "reference";
    case ModelRole::OLD_POLICY: return "old_policy";
    case ModelRole::CRITIC: return "critic";
    case ModelRole::REWARD_MODEL: return "reward_model";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "lm") return HeadKind::LM;
  if (s == "value") return HeadKind::VALUE;
  if (s == "reward") return HeadKind::REWARD;
  throw ConfigError("unknown head kind '" + s + "'");
}

ModelRole default_role(HeadKind k) {
  switch (k) {
    case HeadKind::LM: return ModelRole::POLICY;
    case HeadKind::VALUE: return ModelRole::CRITIC;
    case HeadKind::REWARD: return ModelRole::REWARD_MODEL;
  }
  return ModelRole::POLICY;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(std::string("model.") + field + ": " + what);
  };
  need(vocab_size >= 2, "vocab_size", "must be >= 2");
  need(embed_dim >= 1, "embed_dim", "must be >= 1");
  need(num_layers >= 1, "num_layers", "must be >= 1");
  need(context_len >= 2, "context_len", "must be >= 2");
  need(mlp_dim >= 1, "mlp_dim", "must be >= 1");
  need(content_vocab >= 0 && content_vocab <= vocab_size, "content_vocab", "must lie in [0, vocab_size]");
  need(eos_id >= -1 && eos_id < vocab_size, "eos_id", "must be -1 or a valid token id");
}

std::uint64_t ModelConfig::hash() const {
  const std::string canon = std::to_string(vocab_size) + "/" + std::to_string(embed_dim) + "/" +
                            std::to_string(num_layers) + "/" + std::to_string(context_len) + "/" +
                            to_string(head_kind) + "/" + std::to_string(mlp_dim) + "/" +
                            std::to_string(content_vocab) + "/" + std::to_string(eos_id);
  return mix64(hash_name(canon));
}

ModelHandle init_model(const ModelConfig& config, Seed seed) {
  config.validate();
  ModelHandle m;
  m.config = config;
  m.role = default_role(config.head_kind);
  Rng rng(split(seed, "init_model"));
  auto& p = m.params;
  const int d = config.embed_dim;
  auto fill = [&](std::size_t idx, double stddev) {
    auto& v = p[idx].value;
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = stddev * rng.normal();
  };
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid_std = w_std / std::sqrt(2.0 * config.num_layers);

  fill(p.add("tok_emb", config.vocab_size, d), 0.5);
  fill(p.add("pos_emb", config.context_len, d), 0.5);
  fill(p.add("seg_emb", 2, d), 0.5);
  for (int l = 0; l < config.num_layers; ++l) {
    p[p.add(block_name(l, "norm1"), 1, d)].value.setOnes();
    fill(p.add(block_name(l, "wq"), d, d), w_std);
    fill(p.add(block_name(l, "wk"), d, d), w_std);
    fill(p.add(block_name(l, "wv"), d, d), w_std);
    fill(p.add(block_name(l, "wo"), d, d), resid_std);
    p[p.add(block_name(l, "norm2"), 1, d)].value.setOnes();
    fill(p.add(block_name(l, "w1"), d, config.mlp_dim), w_std);
    p.add(block_name(l, "b1"), 1, config.mlp_dim);
    fill(p.add(block_name(l, "w2"), config.mlp_dim, d), resid_std / std::sqrt(static_cast<double>(config.mlp_dim) / d));
    p.add(block_name(l, "b2"), 1, d);
  }
  p[p.add("final_norm", 1, d)].value.setOnes();
  const auto hw = p.add("head.w", d, head_cols(config));
  p.add("head.b", 1, head_cols(config));
  if (config.head_kind == HeadKind::LM) fill(hw, 0.02);
  return m;
}

ModelHandle clone_frozen(const ModelHandle& model, ModelRole role) {
  if (role != ModelRole::REFERENCE && role != ModelRole::OLD_POLICY) {
    throw ConfigError("clone_frozen: role must be REFERENCE or OLD_POLICY");
  }
  ModelHandle out = model;
  out.role = role;
  out.params.zero_grad();
  return out;
}

ModelHandle with_head(const ModelHandle& source, HeadKind kind, Seed seed) {
  ModelConfig c = source.config;
  c.head_kind = kind;
  ModelHandle out = init_model(c, seed);
  for (auto& e : out.params) {
    if (e.name.rfind("head.", 0) == 0) continue;
    e.value = source.params.at(e.name).value;
  }
  return out;
}

SequenceLayout make_layout(const ModelConfig& config, std::span<const int> prompt, std::span<const int> continuation) {
  const std::size_t total = prompt.size() + continuation.size();
  if (total > static_cast<std::size_t>(config.context_len)) {
    throw LengthError("prompt+continuation length " + std::to_string(total) + " exceeds context_len " +
                      std::to_string(config.context_len));
  }
  SequenceLayout lay;
  lay.prompt_len = static_cast<int>(prompt.size());
  lay.ids.reserve(total);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    lay.ids.push_back(prompt[i]);
    lay.positions.push_back(static_cast<int>(i));
    lay.segments.push_back(0);
  }
  int counter = 0;
  for (int id : continuation) {
    if (id >= 0 && id < config.content_vocab) ++counter;
    lay.ids.push_back(id);
    lay.positions.push_back(continuation_position(config, counter));
    lay.segments.push_back(1);
  }
  for (int id : lay.ids) {
    if (id < 0 || id >= config.vocab_size) throw VocabError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return lay;
}

Var forward_hidden(Tape& tape, ModelHandle& model, const SequenceLayout& layout) {
  const auto& c = model.config;
  auto& p = model.params;
  auto P = [&](const std::string& name) { return tape.param(p, p.index_of(name)); };
  Var x = tape.add(tape.add(tape.gather_rows(P("tok_emb"), layout.ids), tape.gather_rows(P("pos_emb"), layout.positions)),
                   tape.gather_rows(P("seg_emb"), layout.segments));
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.embed_dim));
  for (int l = 0; l < c.num_layers; ++l) {
    const Var h = tape.rms_norm_rows(x, P(block_name(l, "norm1")));
    const Var q = tape.matmul(h, P(block_name(l, "wq")));
    const Var k = tape.matmul(h, P(block_name(l, "wk")));
    const Var v = tape.matmul(h, P(block_name(l, "wv")));
    const Var att = tape.causal_softmax_rows(tape.scale(tape.matmul_bt(q, k), scale));
    x = tape.add(x, tape.matmul(tape.matmul(att, v), P(block_name(l, "wo"))));
    const Var h2 = tape.rms_norm_rows(x, P(block_name(l, "norm2")));
    const Var a = tape.tanh(tape.add_row(tape.matmul(h2, P(block_name(l, "w1"))), P(block_name(l, "b1"))));
    x = tape.add(x, tape.add_row(tape.matmul(a, P(block_name(l, "w2"))), P(block_name(l, "b2"))));
  }
  return tape.rms_norm_rows(x, P("final_norm"));
}

LmTerms lm_terms(Tape& tape, ModelHandle& policy, std::span<const int> prompt, std::span<const int> continuation) {
  if (policy.config.head_kind != HeadKind::LM) throw ConfigError("lm_terms: model does not carry an LM head");
  check_prompt(prompt);
  const SequenceLayout lay = make_layout(policy.config, prompt, continuation);
  const Var hidden = forward_hidden(tape, policy, lay);
  const auto T = static_cast<Eigen::Index>(continuation.size());
  auto& p = policy.params;
  const Var hs = tape.slice_rows(hidden, lay.prompt_len - 1, T);
  const Var logits = tape.add_row(tape.matmul(hs, tape.param(p, p.index_of("head.w"))), tape.param(p, p.index_of("head.b")));
  const Var lsm = tape.log_softmax_rows(logits);
  return LmTerms{tape.pick(lsm, continuation), lsm};
}

Var token_logprobs(Tape& tape, ModelHandle& policy, std::span<const int> prompt, std::span<const int> continuation) {
  return lm_terms(tape, policy, prompt, continuation).logprobs;
}

Var values(Tape& tape, ModelHandle& critic, std::span<const int> prompt, std::span<const int> tokens) {
  if (critic.config.head_kind != HeadKind::VALUE) throw ConfigError("values: model does not carry a value head");
  check_prompt(prompt);
  const SequenceLayout lay = make_layout(critic.config, prompt, tokens);
  const Var hidden = forward_hidden(tape, critic, lay);
  auto& p = critic.params;
  const Var hs = tape.slice_rows(hidden, lay.prompt_len - 1, static_cast<Eigen::Index>(tokens.size()));
  return tape.add_row(tape.matmul(hs, tape.param(p, p.index_of("head.w"))), tape.param(p, p.index_of("head.b")));
}

Var reward_prediction(Tape& tape, ModelHandle& reward_model, std::span<const int> prompt, std::span<const int> tokens) {
  if (reward_model.config.head_kind != HeadKind::REWARD) {
    throw ConfigError("reward_prediction: model does not carry a reward head");
  }
  check_prompt(prompt);
  const auto used = through_first_eos(reward_model.config, tokens);
  const SequenceLayout lay = make_layout(reward_model.config, prompt, used);
  const Var hidden = forward_hidden(tape, reward_model, lay);
  auto& p = reward_model.params;
  const Var last = tape.slice_rows(hidden, static_cast<Eigen::Index>(lay.ids.size()) - 1, 1);
  return tape.sigmoid(
      tape.add_row(tape.matmul(last, tape.param(p, p.index_of("head.w"))), tape.param(p, p.index_of("head.b"))));
}

std::vector<double> sequence_logprobs(const ModelHandle& model, std::span<const int> prompt,
                                      std::span<const int> continuation) {
  if (model.config.head_kind != HeadKind::LM) throw ConfigError("sequence_logprobs: model does not carry an LM head");
  if (continuation.empty()) {
    make_layout(model.config, prompt, continuation);
    return {};
  }
  const HiddenRun run = run_hidden(model, prompt, continuation);
  std::vector<double> out;
  out.reserve(continuation.size());
  for (std::size_t t = 0; t < continuation.size(); ++t) {
    const auto lsm = log_softmax(apply_head(model, run.predictive[t]));
    out.push_back(lsm[static_cast<std::size_t>(continuation[t])]);
  }
  return out;
}

std::vector<double> next_token_distribution(const ModelHandle& model, std::span<const int> prompt,
                                            std::span<const int> prefix) {
  if (model.config.head_kind != HeadKind::LM) throw ConfigError("next_token_distribution: not an LM head");
  const HiddenRun run = run_hidden(model, prompt, prefix);
  auto lsm = log_softmax(apply_head(model, run.last));
  for (double& v : lsm) v = std::exp(v);
  return lsm;
}

namespace {

TokenSeq decode_loop(const ModelHandle& model, std::span<const int> prompt, int max_len, double temperature,
                     Seed seed, bool greedy) {
  if (model.config.head_kind != HeadKind::LM) throw ConfigError("sampling requires an LM head");
  check_prompt(prompt);
  const auto& c = model.config;
  const int room = c.context_len - static_cast<int>(prompt.size());
  if (room < 0) throw LengthError("prompt exceeds context length");
  const int limit = std::min(max_len, room);
  Decoder dec(model);
  RowVector h;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const int id = prompt[i];
    if (id < 0 || id >= c.vocab_size) throw VocabError("prompt token outside vocabulary");
    h = dec.step(id, static_cast<int>(i), 0);
  }
  Rng rng(seed);
  TokenSeq out;
  int counter = 0;
  while (static_cast<int>(out.size()) < limit) {
    const RowVector logits = apply_head(model, h);
    int next = 0;
    if (greedy) {
      logits.maxCoeff(&next);
    } else {
      const double m = logits.maxCoeff();
      std::vector<double> w(static_cast<std::size_t>(logits.size()));
      double total = 0.0;
      for (Eigen::Index k = 0; k < logits.size(); ++k) {
        w[static_cast<std::size_t>(k)] = std::exp((logits(k) - m) / temperature);
        total += w[static_cast<std::size_t>(k)];
      }
      const double u = rng.uniform() * total;
      double acc = 0.0;
      next = static_cast<int>(w.size()) - 1;
      for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u < acc) {
          next = static_cast<int>(k);
          break;
        }
      }
      // Guard against landing on a zero-weight tail entry via rounding.
      while (next > 0 && w[static_cast<std::size_t>(next)] == 0.0) --next;
    }
    out.push_back(next);
    if (next == c.eos_id) break;
    if (static_cast<int>(out.size()) >= limit) break;
    if (next < c.content_vocab) ++counter;
    h = dec.step(next, continuation_position(c, counter), 1);
  }
  return out;
}

}  // namespace

TokenSeq sample_sequence(const ModelHandle& model, std::span<const int> prompt, int max_len, double temperature,
                         Seed seed) {
  if (!(temperature > 0.0)) throw DomainError("sample_sequence: temperature must be > 0");
  return decode_loop(model, prompt, max_len, temperature, seed, false);
}

TokenSeq greedy_decode(const ModelHandle& model, std::span<const int> prompt, int max_len) {
  return decode_loop(model, prompt, max_len, 1.0, Seed{0}, true);
}

std::vector<double> value_estimates(const ModelHandle& critic, std::span<const int> prompt,
                                    std::span<const int> tokens) {
  if (critic.config.head_kind != HeadKind::VALUE) throw ConfigError("value_estimates: not a value head");
  if (tokens.empty()) {
    make_layout(critic.config, prompt, tokens);
    return {};
  }
  const HiddenRun run = run_hidden(critic, prompt, tokens);
  std::vector<double> out;
  out.reserve(tokens.size());
  for (const auto& h : run.predictive) out.push_back(apply_head(critic, h)(0));
  return out;
}

double reward_score_predict(const ModelHandle& reward_model, std::span<const int> prompt,
                            std::span<const int> tokens) {
  if (reward_model.config.head_kind != HeadKind::REWARD) throw ConfigError("reward_score_predict: not a reward head");
  const auto used = through_first_eos(reward_model.config, tokens);
  const HiddenRun run = run_hidden(reward_model, prompt, used);
  return logistic(apply_head(reward_model, run.last)(0));
}

void save_model(const std::string& path, const ModelHandle& model) {
  save_checkpoint(path, model.params, model.config.hash());
  const auto& c = model.config;
  nlohmann::json j = {{"vocab_size", c.vocab_size},     {"embed_dim", c.embed_dim},
                      {"num_layers", c.num_layers},     {"context_len", c.context_len},
                      {"head_kind", to_string(c.head_kind)}, {"mlp_dim", c.mlp_dim},
                      {"content_vocab", c.content_vocab}, {"eos_id", c.eos_id}};
  std::ofstream f(path + ".json", std::ios::trunc);
  if (!f) throw IoError("cannot write model config: " + path + ".json");
  f << j.dump(2) << "\n";
}

ModelHandle load_model(const std::string& path, ModelRole role) {
  std::ifstream f(path + ".json");
  if (!f) throw IoError("cannot read model config: " + path + ".json");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model config " + path + ".json: " + e.what());
  }
  ModelConfig c;
  c.vocab_size = j.at("vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.num_layers = j.at("num_layers");
  c.context_len = j.at("context_len");
  c.head_kind = head_kind_from_string(j.at("head_kind"));
  c.mlp_dim = j.at("mlp_dim");
  c.content_vocab = j.at("content_vocab");
  c.eos_id = j.at("eos_id");
  c.validate();
  auto ck = load_checkpoint(path);
  if (ck.config_hash != c.hash()) throw CheckpointError("checkpoint/config hash mismatch for " + path);
  ModelHandle m = init_model(c, Seed{0});
  if (ck.params.size() != m.params.size()) throw CheckpointError("checkpoint entry count mismatch for " + path);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& src = ck.params[i];
    auto& dst = m.params[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() || src.value.cols() != dst.value.cols()) {
      throw CheckpointError("checkpoint entry '" + src.name + "' does not match the model layout");
    }
    dst.value = src.value;
  }
  m.role = role;
  return m;
}

}  // namespace lyricrl
