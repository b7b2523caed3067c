#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyricrl/numcore/param_set.hpp"
#include "lyricrl/numcore/rng.hpp"
#include "lyricrl/numcore/tape.hpp"
#include "lyricrl/numcore/types.hpp"

namespace lyricrl {

enum class HeadKind { LM, VALUE, REWARD };

enum class ModelRole { POLICY, REFERENCE, OLD_POLICY, CRITIC, REWARD_MODEL };

std::string to_string(HeadKind k);
std::string to_string(ModelRole r);
HeadKind head_kind_from_string(const std::string& s);

/// Shape of the shared autoregressive trunk plus the head it carries.
///
/// Positions: prompt token i sits at position i. A continuation token sits at
/// the number of content tokens (ids < content_vocab) emitted so far, itself
/// included, so the model can line up its output with the prompt by position.
/// A learned segment embedding distinguishes prompt from continuation.
struct ModelConfig {
  int vocab_size = 35;
  int embed_dim = 32;
  int num_layers = 2;
  int context_len = 160;
  HeadKind head_kind = HeadKind::LM;
  int mlp_dim = 64;
  int content_vocab = 24;
  int eos_id = 25;  // -1: no stop token

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Stable 64-bit digest, stored in checkpoint headers.
  std::uint64_t hash() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelHandle {
  ModelConfig config;
  ParamSet params;
  ModelRole role = ModelRole::POLICY;

  /// REFERENCE and OLD_POLICY handles refuse gradient updates.
  bool frozen() const { return role == ModelRole::REFERENCE || role == ModelRole::OLD_POLICY; }
};

/// Default role for a head kind: LM -> POLICY, VALUE -> CRITIC, REWARD -> REWARD_MODEL.
ModelRole default_role(HeadKind k);

/// Deterministic in (config, seed). VALUE and REWARD heads start at zero.
ModelHandle init_model(const ModelConfig& config, Seed seed);

/// Deep copy tagged REFERENCE or OLD_POLICY.
ModelHandle clone_frozen(const ModelHandle& model, ModelRole role = ModelRole::REFERENCE);

/// Fresh model with `kind` head whose trunk parameters are copied from
/// `source`. The new head is initialised as init_model would do it.
ModelHandle with_head(const ModelHandle& source, HeadKind kind, Seed seed);

/// Token ids with their position and segment indices.
struct SequenceLayout {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> segments;
  int prompt_len = 0;
};

/// Throws LengthError when prompt+continuation exceeds context_len, VocabError
/// on an id outside the vocabulary.
SequenceLayout make_layout(const ModelConfig& config, std::span<const int> prompt, std::span<const int> continuation);

// ---- differentiable path -------------------------------------------------

/// Final normalized hidden states for every position (L x embed_dim).
Var forward_hidden(Tape& tape, ModelHandle& model, const SequenceLayout& layout);

/// Per-token log pi(continuation_t | prompt, continuation_<t), as a T x 1 column.
Var token_logprobs(Tape& tape, ModelHandle& policy, std::span<const int> prompt, std::span<const int> continuation);

/// Token log-probs together with the full log-softmax rows they were picked from.
struct LmTerms {
  Var logprobs;       // T x 1
  Var log_softmax;    // T x vocab
};
LmTerms lm_terms(Tape& tape, ModelHandle& policy, std::span<const int> prompt, std::span<const int> continuation);

/// Per-token values V(t) as a T x 1 column; V(t) reads the state before token t.
Var values(Tape& tape, ModelHandle& critic, std::span<const int> prompt, std::span<const int> tokens);

/// Logistic reward prediction read at the final token (1 x 1).
Var reward_prediction(Tape& tape, ModelHandle& reward_model, std::span<const int> prompt, std::span<const int> tokens);

// ---- inference path ------------------------------------------------------

/// Per-token log-probabilities of `continuation`. Empty continuation -> empty.
std::vector<double> sequence_logprobs(const ModelHandle& model, std::span<const int> prompt,
                                      std::span<const int> continuation);

/// Next-token distribution after prompt+prefix (sums to 1).
std::vector<double> next_token_distribution(const ModelHandle& model, std::span<const int> prompt,
                                            std::span<const int> prefix);

/// Autoregressive sampling until eos_id or max_len tokens. max_len is capped by
/// the remaining context. Throws DomainError if temperature <= 0.
TokenSeq sample_sequence(const ModelHandle& model, std::span<const int> prompt, int max_len, double temperature,
                         Seed seed);

/// Argmax decoding (lowest id on ties).
TokenSeq greedy_decode(const ModelHandle& model, std::span<const int> prompt, int max_len);

std::vector<double> value_estimates(const ModelHandle& critic, std::span<const int> prompt,
                                    std::span<const int> tokens);

/// Reads the hidden state at the first eos_id (or the last token when there is
/// none); anything after it is ignored.
double reward_score_predict(const ModelHandle& reward_model, std::span<const int> prompt,
                            std::span<const int> tokens);

/// Checkpoint + JSON config sidecar (<path>.json).
void save_model(const std::string& path, const ModelHandle& model);
ModelHandle load_model(const std::string& path, ModelRole role);

}  // namespace lyricrl
