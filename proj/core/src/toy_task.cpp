#include "lyricrl/task/toy_task.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "jsonl_io.hpp"

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

using nlohmann::json;

void Vocabulary::validate() const {
  if (phoneme_vocab < 4) throw ConfigError("task.phoneme_vocab: must be >= 4");
  for (const auto& m : motifs) {
    for (int p : m) {
      if (!is_phoneme(p)) throw ConfigError("task: style motif references an invalid phoneme");
    }
  }
}

TokenSeq prompt_tokens(const Prompt& prompt, const Vocabulary& vocab) {
  TokenSeq out;
  out.reserve(prompt.lyric.size() + 2);
  out.push_back(prompt.style);
  out.insert(out.end(), prompt.lyric.begin(), prompt.lyric.end());
  out.push_back(vocab.eos());
  return out;
}

std::vector<Prompt> gen_prompts(int n, Seed seed, const Vocabulary& vocab, const std::string& id_prefix) {
  if (n < 1) throw DomainError("gen_prompts: n must be >= 1");
  std::vector<Prompt> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(split(seed, static_cast<std::uint64_t>(i)));
    Prompt p;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    p.prompt_id = id_prefix + buf;
    const auto len = rng.uniform_int(kMinLyricLen, kMaxLyricLen);
    p.lyric.resize(static_cast<std::size_t>(len));
    for (auto& ph : p.lyric) ph = static_cast<int>(rng.uniform_int(0, vocab.phoneme_vocab - 1));
    p.style = vocab.style(static_cast<int>(rng.uniform_int(0, Vocabulary::kNumStyles - 1)));
    out.push_back(std::move(p));
  }
  return out;
}

PhonemeSeq decode_tokens(const TokenSeq& tokens, const Vocabulary& vocab) {
  PhonemeSeq out;
  for (int id : tokens) {
    if (vocab.is_phoneme(id)) {
      out.push_back(id);
    } else if (id == vocab.eos()) {
      break;
    } else if (id == vocab.bos() || id == vocab.rest()) {
      continue;
    } else if (vocab.is_style(id)) {
      const auto& m = vocab.motif(id);
      out.insert(out.end(), m.begin(), m.end());
    } else {
      throw VocabError("decode_tokens: unknown token id " + std::to_string(id));
    }
  }
  return out;
}

TokenSeq reference_trajectory(const Prompt& prompt, const Vocabulary& vocab, Seed seed) {
  Rng rng(seed);
  TokenSeq out;
  out.push_back(vocab.bos());
  for (int ph : prompt.lyric) {
    if (rng.bernoulli(kRestRate)) out.push_back(vocab.rest());
    out.push_back(ph);
  }
  out.push_back(vocab.eos());
  return out;
}

std::string to_string(CorruptionMode m) {
  switch (m) {
    case CorruptionMode::CLEAN: return "clean";
    case CorruptionMode::INSERT_RUN: return "insert_run";
    case CorruptionMode::INSERT_STYLE: return "insert_style";
    case CorruptionMode::OMIT: return "omit";
    case CorruptionMode::TRUNCATE: return "truncate";
  }
  return "?";
}

void CorruptionSpec::validate() const {
  const double probs[] = {p_clean, p_insert, p_omit, p_truncate};
  const char* names[] = {"p_clean", "p_insert", "p_omit", "p_truncate"};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!(probs[i] >= 0.0)) throw ConfigError(std::string("task.corruption.") + names[i] + ": must be >= 0");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("task.corruption: probabilities must sum to 1");
  if (insert_run_range.first < 1 || insert_run_range.second < insert_run_range.first) {
    throw ConfigError("task.corruption.insert_run_range: need 1 <= min <= max");
  }
  if (omit_span_range.first < 1 || omit_span_range.second < omit_span_range.first) {
    throw ConfigError("task.corruption.omit_span_range: need 1 <= min <= max");
  }
  if (!(style_echo_share >= 0.0 && style_echo_share <= 1.0)) {
    throw ConfigError("task.corruption.style_echo_share: must lie in [0, 1]");
  }
}

namespace {

std::vector<std::size_t> phoneme_indices(const TokenSeq& traj, const Vocabulary& vocab) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj[i] == vocab.eos()) break;
    if (vocab.is_phoneme(traj[i])) idx.push_back(i);
  }
  return idx;
}

}  // namespace

TokenSeq apply_corruption(const TokenSeq& traj, const Corruption& c, const Prompt& prompt, const Vocabulary& vocab) {
  if (c.mode == CorruptionMode::CLEAN) return traj;
  const auto ph = phoneme_indices(traj, vocab);
  if (ph.empty()) return traj;
  const auto n = static_cast<int>(ph.size());
  if (c.at < 0 || c.at >= n) throw DomainError("apply_corruption: edit point outside the trajectory");
  const auto pos = static_cast<std::ptrdiff_t>(ph[static_cast<std::size_t>(c.at)]);
  TokenSeq out;
  switch (c.mode) {
    case CorruptionMode::INSERT_RUN:
      out.assign(traj.begin(), traj.begin() + pos + 1);
      out.insert(out.end(), static_cast<std::size_t>(std::max(c.length, 0)), traj[static_cast<std::size_t>(pos)]);
      out.insert(out.end(), traj.begin() + pos + 1, traj.end());
      break;
    case CorruptionMode::INSERT_STYLE:
      out.assign(traj.begin(), traj.begin() + pos + 1);
      out.push_back(prompt.style);
      out.insert(out.end(), traj.begin() + pos + 1, traj.end());
      break;
    case CorruptionMode::OMIT: {
      const int last = std::min(n - 1, c.at + std::max(c.length, 1) - 1);
      const auto end = static_cast<std::ptrdiff_t>(ph[static_cast<std::size_t>(last)]) + 1;
      out.assign(traj.begin(), traj.begin() + pos);
      out.insert(out.end(), traj.begin() + end, traj.end());
      break;
    }
    case CorruptionMode::TRUNCATE:
      out.assign(traj.begin(), traj.begin() + pos);
      out.push_back(vocab.eos());
      break;
    case CorruptionMode::CLEAN:
      break;
  }
  return out;
}

Corruption draw_corruption(const TokenSeq& traj, const CorruptionSpec& spec, const Vocabulary& vocab, Rng& rng) {
  const auto n = static_cast<int>(phoneme_indices(traj, vocab).size());
  Corruption c;
  const double u = rng.uniform();
  if (n == 0 || u < spec.p_clean) return c;
  if (u < spec.p_clean + spec.p_insert) {
    c.at = static_cast<int>(rng.uniform_int(0, n - 1));
    if (rng.bernoulli(spec.style_echo_share)) {
      c.mode = CorruptionMode::INSERT_STYLE;
      c.length = 1;
    } else {
      c.mode = CorruptionMode::INSERT_RUN;
      c.length = static_cast<int>(rng.uniform_int(spec.insert_run_range.first, spec.insert_run_range.second));
    }
  } else if (u < spec.p_clean + spec.p_insert + spec.p_omit) {
    c.mode = CorruptionMode::OMIT;
    c.length = std::min(n - 1, static_cast<int>(rng.uniform_int(spec.omit_span_range.first, spec.omit_span_range.second)));
    c.length = std::max(c.length, 1);
    c.at = static_cast<int>(rng.uniform_int(0, n - c.length));
  } else {
    c.mode = CorruptionMode::TRUNCATE;
    c.at = n > 1 ? static_cast<int>(rng.uniform_int(1, n - 1)) : 0;
  }
  return c;
}

TokenSeq corrupt_trajectory(const TokenSeq& traj, const CorruptionSpec& spec, const Prompt& prompt, Seed seed,
                            const Vocabulary& vocab) {
  spec.validate();
  Rng rng(seed);
  return apply_corruption(traj, draw_corruption(traj, spec, vocab, rng), prompt, vocab);
}

std::vector<CorpusRow> build_pretrain_corpus(int n_prompts, const CorruptionSpec& spec, Seed seed,
                                             const Vocabulary& vocab, const std::string& id_prefix) {
  spec.validate();
  const auto prompts = gen_prompts(n_prompts, split(seed, "prompts"), vocab, id_prefix);
  std::vector<CorpusRow> rows;
  rows.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const Seed row_seed = split(split(seed, "rows"), i);
    const TokenSeq ref = reference_trajectory(prompts[i], vocab, split(row_seed, "reference"));
    Rng rng(split(row_seed, "corrupt"));
    const Corruption c = draw_corruption(ref, spec, vocab, rng);
    rows.push_back(CorpusRow{prompts[i], apply_corruption(ref, c, prompts[i], vocab), c.mode});
  }
  return rows;
}

namespace {

using detail::open_out;
using detail::read_jsonl;

Prompt prompt_from_json(const json& j) {
  Prompt p;
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.lyric = j.at("lyric").get<PhonemeSeq>();
  p.style = j.at("style").get<int>();
  return p;
}

}  // namespace

void save_corpus_jsonl(const std::filesystem::path& path, const std::vector<CorpusRow>& rows) {
  auto f = open_out(path);
  for (const auto& r : rows) {
    json j = {{"prompt_id", r.prompt.prompt_id}, {"lyric", r.prompt.lyric}, {"style", r.prompt.style}, {"tokens", r.tokens}};
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<CorpusRow> load_corpus_jsonl(const std::filesystem::path& path) {
  std::vector<CorpusRow> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(CorpusRow{prompt_from_json(j), j.at("tokens").get<TokenSeq>(), CorruptionMode::CLEAN});
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": malformed corpus row: " + e.what());
    }
  }
  return out;
}

void save_prompts_jsonl(const std::filesystem::path& path, const std::vector<Prompt>& prompts) {
  auto f = open_out(path);
  for (const auto& p : prompts) {
    json j = {{"prompt_id", p.prompt_id}, {"lyric", p.lyric}, {"style", p.style}};
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<Prompt> load_prompts_jsonl(const std::filesystem::path& path) {
  std::vector<Prompt> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(prompt_from_json(j));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": malformed prompt row: " + e.what());
    }
  }
  return out;
}

}  // namespace lyricrl
