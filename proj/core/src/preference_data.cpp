#include "lyricrl/prefs/preference_data.hpp"

#include <algorithm>
#include <cstdlib>
#include <tuple>

#include "json.hpp"
#include "jsonl_io.hpp"

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

using nlohmann::json;

std::string to_string(PairRule r) {
  switch (r) {
    case PairRule::ERR_DIFF: return "ERR_DIFF";
    case PairRule::MINMAX_FALLBACK: return "MINMAX_FALLBACK";
    case PairRule::HALLUC_CROSS: return "HALLUC_CROSS";
  }
  return "?";
}

PairRule pair_rule_from_string(const std::string& s) {
  if (s == "ERR_DIFF") return PairRule::ERR_DIFF;
  if (s == "MINMAX_FALLBACK") return PairRule::MINMAX_FALLBACK;
  if (s == "HALLUC_CROSS") return PairRule::HALLUC_CROSS;
  throw IoError("unknown pairing rule '" + s + "'");
}

void PairingConfig::validate() const {
  if (err_diff_threshold <= 0) throw ConfigError("pairing.err_diff_threshold: must be positive");
  if (ins_run <= 0) throw ConfigError("pairing.ins_run: must be positive");
  if (omit <= 0) throw ConfigError("pairing.omit: must be positive");
  if (window <= 0) throw ConfigError("pairing.window: must be positive");
  if (group_size < 2) throw ConfigError("pairing.group_size: must be >= 2");
}

GeneratedSample score_sample(const Prompt& prompt, const TokenSeq& tokens, double noise_rate, Seed seed,
                             const HallucinationThresholds& thresholds, const Vocabulary& vocab) {
  GeneratedSample s;
  s.prompt_id = prompt.prompt_id;
  s.tokens = tokens;
  s.hyp_phonemes = simulate_asr_noise(decode_tokens(tokens, vocab), noise_rate, seed, vocab.phoneme_vocab);
  const AlignmentResult a = align(prompt.lyric, s.hyp_phonemes);
  s.n_errors = a.distance;
  s.per_raw = per(prompt.lyric, s.hyp_phonemes);
  s.reward = reward_from_per(s.per_raw);
  s.hallucinated = classify_hallucinated(a, static_cast<int>(prompt.lyric.size()), thresholds);
  return s;
}

namespace {

int rule_strength(PairRule r) {
  switch (r) {
    case PairRule::HALLUC_CROSS: return 2;
    case PairRule::ERR_DIFF: return 1;
    case PairRule::MINMAX_FALLBACK: return 0;
  }
  return 0;
}

}  // namespace

std::vector<PreferencePair> build_pairs(const std::vector<GeneratedSample>& group, const PairingConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(group.size()) != cfg.group_size) {
    throw GroupingError("build_pairs: group has " + std::to_string(group.size()) + " samples, expected " +
                        std::to_string(cfg.group_size));
  }
  for (const auto& s : group) {
    if (s.prompt_id != group.front().prompt_id) throw GroupingError("build_pairs: mixed prompt ids in one group");
  }

  std::map<std::pair<std::string, std::string>, PairRule> found;
  auto emit = [&](const GeneratedSample& chosen, const GeneratedSample& rejected, PairRule rule) {
    const auto key = std::make_pair(chosen.sample_id, rejected.sample_id);
    auto [it, inserted] = found.emplace(key, rule);
    if (!inserted && rule_strength(rule) > rule_strength(it->second)) it->second = rule;
  };

  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      const auto& a = group[i];
      const auto& b = group[j];
      if (std::abs(a.n_errors - b.n_errors) > cfg.err_diff_threshold) {
        if (a.n_errors < b.n_errors) {
          emit(a, b, PairRule::ERR_DIFF);
        } else {
          emit(b, a, PairRule::ERR_DIFF);
        }
      }
    }
  }
  for (const auto& good : group) {
    if (good.hallucinated) continue;
    for (const auto& bad : group) {
      if (!bad.hallucinated) continue;
      if (good.n_errors <= bad.n_errors) emit(good, bad, PairRule::HALLUC_CROSS);
    }
  }
  if (found.empty()) {
    std::vector<const GeneratedSample*> order;
    for (const auto& s : group) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const GeneratedSample* x, const GeneratedSample* y) {
      return std::tie(x->per_raw, x->sample_id) < std::tie(y->per_raw, y->sample_id);
    });
    emit(*order.front(), *order.back(), PairRule::MINMAX_FALLBACK);
  }

  std::vector<PreferencePair> out;
  out.reserve(found.size());
  for (const auto& [key, rule] : found) out.push_back(PreferencePair{group.front().prompt_id, key.first, key.second, rule});
  return out;
}

PreferenceDataset build_dataset(const std::vector<GeneratedSample>& samples, const PairingConfig& cfg) {
  cfg.validate();
  std::vector<std::string> order;
  std::map<std::string, std::vector<GeneratedSample>> groups;
  for (const auto& s : samples) {
    auto [it, inserted] = groups.try_emplace(s.prompt_id);
    if (inserted) order.push_back(s.prompt_id);
    it->second.push_back(s);
  }
  std::string incomplete;
  for (const auto& id : order) {
    if (static_cast<int>(groups[id].size()) != cfg.group_size) incomplete += (incomplete.empty() ? "" : ", ") + id;
  }
  if (!incomplete.empty()) throw GroupingError("incomplete groups for prompt ids: " + incomplete);

  PreferenceDataset ds;
  for (const auto& r : {PairRule::ERR_DIFF, PairRule::MINMAX_FALLBACK, PairRule::HALLUC_CROSS}) ds.stats.pairs_per_rule[to_string(r)] = 0;
  for (const auto& id : order) {
    for (auto& p : build_pairs(groups[id], cfg)) {
      ++ds.stats.pairs_per_rule[to_string(p.rule)];
      ds.pairs.push_back(std::move(p));
    }
  }
  for (const auto& s : samples) {
    const int bin = std::clamp(static_cast<int>(s.per_raw * 10.0), 0, 9);
    ++ds.stats.per_histogram[static_cast<std::size_t>(bin)];
  }
  ds.stats.n_samples = static_cast<int>(samples.size());
  ds.stats.n_groups = static_cast<int>(order.size());
  ds.stats.n_pairs = static_cast<int>(ds.pairs.size());
  return ds;
}

void save_preference_dataset(const std::filesystem::path& path, const PreferenceDataset& ds) {
  {
    auto f = detail::open_out(path);
    for (const auto& p : ds.pairs) {
      json j = {{"prompt_id", p.prompt_id}, {"chosen", p.chosen_id}, {"rejected", p.rejected_id}, {"rule", to_string(p.rule)}};
      f << j.dump() << '\n';
    }
    if (!f) throw IoError("write failed: " + path.string());
  }
  json stats = {{"n_samples", ds.stats.n_samples},
                {"n_groups", ds.stats.n_groups},
                {"n_pairs", ds.stats.n_pairs},
                {"pairs_per_rule", ds.stats.pairs_per_rule},
                {"per_histogram", ds.stats.per_histogram}};
  auto f = detail::open_out(path.string() + ".stats.json");
  f << stats.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string() + ".stats.json");
}

std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for (const auto& j : detail::read_jsonl(path)) {
    try {
      out.push_back(PreferencePair{j.at("prompt_id"), j.at("chosen"), j.at("rejected"),
                                   pair_rule_from_string(j.at("rule").get<std::string>())});
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": malformed pair row: " + e.what());
    }
  }
  return out;
}

void save_samples_jsonl(const std::filesystem::path& path, const std::vector<GeneratedSample>& samples) {
  auto f = detail::open_out(path);
  for (const auto& s : samples) {
    json j = {{"sample_id", s.sample_id}, {"prompt_id", s.prompt_id},   {"tokens", s.tokens},
              {"hyp_phonemes", s.hyp_phonemes}, {"per_raw", s.per_raw}, {"n_errors", s.n_errors},
              {"reward", s.reward},       {"hallucinated", s.hallucinated}};
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<GeneratedSample> load_samples_jsonl(const std::filesystem::path& path) {
  std::vector<GeneratedSample> out;
  for (const auto& j : detail::read_jsonl(path)) {
    try {
      GeneratedSample s;
      s.sample_id = j.at("sample_id");
      s.prompt_id = j.at("prompt_id");
      s.tokens = j.at("tokens").get<TokenSeq>();
      s.hyp_phonemes = j.value("hyp_phonemes", PhonemeSeq{});
      s.per_raw = j.value("per_raw", 0.0);
      s.n_errors = j.value("n_errors", 0);
      s.reward = j.value("reward", 0.0);
      s.hallucinated = j.value("hallucinated", false);
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": malformed sample row: " + e.what());
    }
  }
  return out;
}

}  // namespace lyricrl
