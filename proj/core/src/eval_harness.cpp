#include "lyricrl/eval/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "jsonl_io.hpp"

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

FieldDelta delta(double before, double after) {
  FieldDelta d;
  d.absolute = after - before;
  if (before != 0.0) {
    d.relative = d.absolute / before;
  } else {
    d.relative = d.absolute == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return d;
}

}  // namespace

BucketReport bucket_report(const std::vector<GeneratedSample>& samples) {
  BucketReport r;
  r.n = static_cast<int>(samples.size());
  if (r.n == 0) return r;
  int low = 0;
  int mid = 0;
  int high = 0;
  int halluc = 0;
  double total = 0.0;
  for (const auto& s : samples) {
    total += s.reward;
    if (s.reward < kLowBucketBelow) {
      ++low;
    } else if (s.reward > kHighBucketAbove) {
      ++high;
    } else {
      ++mid;
    }
    if (s.hallucinated) ++halluc;
  }
  const double n = r.n;
  r.mean_reward = total / n;
  r.frac_low = low / n;
  r.frac_mid = mid / n;
  r.frac_high = high / n;
  r.halluc_rate = halluc / n;
  return r;
}

TokenSeq generate_song(const ModelHandle& policy, const Prompt& prompt, const Vocabulary& vocab, double temperature,
                       Seed seed) {
  const TokenSeq ptoks = prompt_tokens(prompt, vocab);
  const int room = policy.config.context_len - static_cast<int>(ptoks.size());
  return sample_sequence(policy, ptoks, room, temperature, seed);
}

EvalResult evaluate_generator(const Generator& gen, const std::vector<Prompt>& prompts, const EvalOptions& opts,
                              Seed seed) {
  if (opts.samples_per_prompt < 1) throw DomainError("evaluate: samples_per_prompt must be >= 1");
  if (opts.scorer == Scorer::REWARD_MODEL && opts.reward_model == nullptr) {
    throw ConfigError("evaluate: reward-model scorer selected without a reward model");
  }
  EvalResult out;
  out.records.reserve(prompts.size() * static_cast<std::size_t>(opts.samples_per_prompt));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    for (int k = 0; k < opts.samples_per_prompt; ++k) {
      const Seed s = split(split(seed, i), static_cast<std::uint64_t>(k));
      const TokenSeq tokens = gen(p, split(s, "sample"));
      GeneratedSample rec = score_sample(p, tokens, opts.noise_rate, split(s, "noise"), opts.thresholds, opts.vocab);
      rec.sample_id = p.prompt_id + "-v" + std::to_string(k);
      if (opts.scorer == Scorer::REWARD_MODEL) {
        rec.reward = reward_score_predict(*opts.reward_model, prompt_tokens(p, opts.vocab), tokens);
      }
      out.records.push_back(std::move(rec));
    }
  }
  out.report = bucket_report(out.records);
  return out;
}

EvalResult evaluate_policy(const ModelHandle& policy, const std::vector<Prompt>& prompts, const EvalOptions& opts,
                           Seed seed) {
  const Generator gen = [&](const Prompt& p, Seed s) { return generate_song(policy, p, opts.vocab, opts.temperature, s); };
  return evaluate_generator(gen, prompts, opts, seed);
}

ReportDeltas compare_reports(const BucketReport& before, const BucketReport& after) {
  if (before.n != after.n) {
    throw ComparabilityError("compare_reports: sample counts differ (" + std::to_string(before.n) + " vs " +
                             std::to_string(after.n) + ")");
  }
  return ReportDeltas{delta(before.mean_reward, after.mean_reward), delta(before.frac_low, after.frac_low),
                      delta(before.frac_mid, after.frac_mid), delta(before.frac_high, after.frac_high),
                      delta(before.halluc_rate, after.halluc_rate)};
}

const std::vector<std::string>& TrainingLog::columns() {
  static const std::vector<std::string> cols{"step",        "loss",       "mean_validation_reward",
                                             "bucket_low",  "bucket_mid", "bucket_high",
                                             "chosen_logprob_sum", "rejected_logprob_sum"};
  return cols;
}

void TrainingLog::save_csv(const std::filesystem::path& path) const {
  auto f = detail::open_out(path);
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
  f << '\n';
  for (const auto& r : rows) {
    f << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.mean_validation_reward) << ','
      << fmt_double(r.bucket_low) << ',' << fmt_double(r.bucket_mid) << ',' << fmt_double(r.bucket_high) << ','
      << fmt_double(r.chosen_logprob_sum) << ',' << fmt_double(r.rejected_logprob_sum) << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

TrainingLog TrainingLog::load_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty training log: " + path.string());
  TrainingLog log;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < columns().size()) cells.emplace_back();
    auto num = [](const std::string& s) { return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); };
    LogRow r;
    r.step = std::stoi(cells[0]);
    r.loss = num(cells[1]);
    r.mean_validation_reward = num(cells[2]);
    r.bucket_low = num(cells[3]);
    r.bucket_mid = num(cells[4]);
    r.bucket_high = num(cells[5]);
    r.chosen_logprob_sum = num(cells[6]);
    r.rejected_logprob_sum = num(cells[7]);
    log.rows.push_back(r);
  }
  return log;
}

namespace {

std::string svg_chart(const std::string& title, const std::vector<std::pair<int, double>>& pts) {
  constexpr double W = 640;
  constexpr double H = 360;
  constexpr double M = 48;
  double xmin = pts.front().first;
  double xmax = pts.back().first;
  double ymin = pts.front().second;
  double ymax = ymin;
  for (const auto& [x, y] : pts) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  auto px = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
  auto py = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };
  std::ostringstream o;
  char buf[96];
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<path d=\"M" << M << " " << M << " V" << H - M << " H" << W - M << "\" stroke=\"black\" fill=\"none\"/>\n";
  o << "<path d=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f %.2f", i ? " L" : "M", px(pts[i].first), py(pts[i].second));
    o << buf;
  }
  o << "\" stroke=\"steelblue\" stroke-width=\"2\" fill=\"none\"/>\n";
  std::snprintf(buf, sizeof(buf), "%.4g", ymax);
  o << "<text x=\"4\" y=\"" << M << "\" font-size=\"11\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.4g", ymin);
  o << "<text x=\"4\" y=\"" << H - M << "\" font-size=\"11\">" << buf << "</text>\n";
  o << "<text x=\"" << M << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  o << "<text x=\"" << W - M << "\" y=\"" << H - 16 << "\" font-size=\"11\" text-anchor=\"end\">step "
    << static_cast<long long>(xmax) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::filesystem::path> export_curves(const TrainingLog& log, const std::filesystem::path& dir, bool svg) {
  if (log.rows.empty()) throw DomainError("export_curves: training log is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  using Getter = double (*)(const LogRow&);
  const std::vector<std::pair<std::string, Getter>> series{
      {"loss", [](const LogRow& r) { return r.loss; }},
      {"mean_validation_reward", [](const LogRow& r) { return r.mean_validation_reward; }},
      {"bucket_low", [](const LogRow& r) { return r.bucket_low; }},
      {"bucket_mid", [](const LogRow& r) { return r.bucket_mid; }},
      {"bucket_high", [](const LogRow& r) { return r.bucket_high; }},
      {"chosen_logprob_sum", [](const LogRow& r) { return r.chosen_logprob_sum; }},
      {"rejected_logprob_sum", [](const LogRow& r) { return r.rejected_logprob_sum; }},
  };
  std::vector<std::filesystem::path> written;
  for (const auto& [name, get] : series) {
    std::vector<std::pair<int, double>> pts;
    for (const auto& r : log.rows) {
      const double v = get(r);
      if (!std::isnan(v)) pts.emplace_back(r.step, v);
    }
    if (pts.empty()) continue;
    const auto csv = dir / (name + ".csv");
    {
      auto f = detail::open_out(csv);
      f << "step," << name << '\n';
      for (const auto& [x, y] : pts) f << x << ',' << fmt_double(y) << '\n';
      if (!f) throw IoError("write failed: " + csv.string());
    }
    written.push_back(csv);
    if (svg) {
      const auto path = dir / (name + ".svg");
      auto f = detail::open_out(path);
      f << svg_chart(name, pts);
      if (!f) throw IoError("write failed: " + path.string());
      written.push_back(path);
    }
  }
  return written;
}

void save_report_json(const std::filesystem::path& path, const BucketReport& r) {
  nlohmann::json j = {{"mean_reward", r.mean_reward}, {"frac_low", r.frac_low},       {"frac_mid", r.frac_mid},
                      {"frac_high", r.frac_high},     {"halluc_rate", r.halluc_rate}, {"n", r.n}};
  auto f = detail::open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

BucketReport load_report_json(const std::filesystem::path& path) {
  const auto j = detail::read_json(path);
  try {
    return BucketReport{j.at("mean_reward"), j.at("frac_low"), j.at("frac_mid"),
                        j.at("frac_high"),   j.at("halluc_rate"), j.at("n")};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed report: " + e.what());
  }
}

void save_distribution_csv(const std::filesystem::path& path, const std::vector<GeneratedSample>& records) {
  auto f = detail::open_out(path);
  f << "sample_id,reward,per_raw,hallucinated\n";
  for (const auto& r : records) {
    f << r.sample_id << ',' << fmt_double(r.reward) << ',' << fmt_double(r.per_raw) << ',' << (r.hallucinated ? 1 : 0)
      << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace lyricrl
