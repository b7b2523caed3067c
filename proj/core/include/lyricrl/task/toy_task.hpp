#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lyricrl/numcore/rng.hpp"
#include "lyricrl/numcore/types.hpp"

namespace lyricrl {

/// Token inventory of the synthetic lyric-to-song task.
///
///   [0, phoneme_vocab)        phoneme tokens (decode to themselves)
///   BOS, EOS, REST            control tokens
///   STYLE_0 .. STYLE_{k-1}    style tokens, each bound to a 3-phoneme motif
struct Vocabulary {
  static constexpr int kNumStyles = 8;
  using Motif = std::array<int, 3>;

  int phoneme_vocab = 24;
  std::array<Motif, kNumStyles> motifs{{{0, 5, 10}, {1, 7, 13}, {4, 4, 9}, {2, 11, 20},
                                        {3, 3, 17}, {6, 15, 22}, {8, 12, 19}, {14, 18, 23}}};

  int bos() const { return phoneme_vocab; }
  int eos() const { return phoneme_vocab + 1; }
  int rest() const { return phoneme_vocab + 2; }
  int style(int k) const { return phoneme_vocab + 3 + k; }
  int size() const { return phoneme_vocab + 3 + kNumStyles; }

  bool is_phoneme(int id) const { return id >= 0 && id < phoneme_vocab; }
  bool is_style(int id) const { return id >= style(0) && id < size(); }
  const Motif& motif(int style_id) const { return motifs.at(static_cast<std::size_t>(style_id - style(0))); }

  /// Throws ConfigError if a motif references an invalid phoneme.
  void validate() const;
};

struct Prompt {
  std::string prompt_id;
  PhonemeSeq lyric;
  int style = 0;  // style token id

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// Model-side encoding of a prompt: [style, lyric..., EOS]. The trailing EOS
/// marks where the song should end.
TokenSeq prompt_tokens(const Prompt& prompt, const Vocabulary& vocab);

inline constexpr int kMinLyricLen = 16;
inline constexpr int kMaxLyricLen = 48;
inline constexpr double kRestRate = 0.15;

/// Throws DomainError when n < 1. Ids are "<id_prefix><index>", zero-padded.
std::vector<Prompt> gen_prompts(int n, Seed seed, const Vocabulary& vocab = {}, const std::string& id_prefix = "p");

/// Phonemes map to themselves, BOS/REST are dropped, EOS stops decoding and a
/// style token expands to its motif. Throws VocabError on an unknown id.
PhonemeSeq decode_tokens(const TokenSeq& tokens, const Vocabulary& vocab);

/// BOS, the lyric with RESTs interleaved at kRestRate, EOS.
TokenSeq reference_trajectory(const Prompt& prompt, const Vocabulary& vocab, Seed seed);

enum class CorruptionMode { CLEAN, INSERT_RUN, INSERT_STYLE, OMIT, TRUNCATE };

std::string to_string(CorruptionMode m);

struct CorruptionSpec {
  double p_clean = 0.7;
  double p_insert = 0.1;
  double p_omit = 0.1;
  double p_truncate = 0.1;
  std::pair<int, int> insert_run_range{4, 10};
  std::pair<int, int> omit_span_range{6, 14};
  /// Share of insert events that echo the prompt's style token instead of
  /// repeating a phoneme.
  double style_echo_share = 0.5;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// A concrete edit. `at` is the index of the phoneme (in lyric order) where
/// the edit happens; `length` is the run or span length where relevant.
struct Corruption {
  CorruptionMode mode = CorruptionMode::CLEAN;
  int at = 0;
  int length = 0;
};

/// Applies one concrete edit. Tokens before the edit point are untouched.
TokenSeq apply_corruption(const TokenSeq& traj, const Corruption& c, const Prompt& prompt, const Vocabulary& vocab);

/// Draws an edit from spec and applies it.
Corruption draw_corruption(const TokenSeq& traj, const CorruptionSpec& spec, const Vocabulary& vocab, Rng& rng);
TokenSeq corrupt_trajectory(const TokenSeq& traj, const CorruptionSpec& spec, const Prompt& prompt, Seed seed,
                            const Vocabulary& vocab = {});

struct CorpusRow {
  Prompt prompt;
  TokenSeq tokens;
  CorruptionMode mode = CorruptionMode::CLEAN;  // not persisted
};

/// One (possibly corrupted) reference trajectory per generated prompt.
std::vector<CorpusRow> build_pretrain_corpus(int n_prompts, const CorruptionSpec& spec, Seed seed,
                                             const Vocabulary& vocab = {}, const std::string& id_prefix = "c");

/// JSONL rows: {"prompt_id", "lyric", "style", "tokens"}. Throws IoError.
void save_corpus_jsonl(const std::filesystem::path& path, const std::vector<CorpusRow>& rows);
std::vector<CorpusRow> load_corpus_jsonl(const std::filesystem::path& path);

/// JSONL rows: {"prompt_id", "lyric", "style"}.
void save_prompts_jsonl(const std::filesystem::path& path, const std::vector<Prompt>& prompts);
std::vector<Prompt> load_prompts_jsonl(const std::filesystem::path& path);

}  // namespace lyricrl
