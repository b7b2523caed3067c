#include "commands.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "lyricrl/numcore/errors.hpp"
#include "lyricrl/version.hpp"

namespace lyricrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() { return LYRICRL_VERSION; }

namespace layout {
fs::path prompts(const std::string& set) { return fs::path("data") / ("prompts_" + set + ".jsonl"); }
fs::path raw_samples(const std::string& set) { return fs::path("samples") / (set + ".raw.jsonl"); }
fs::path samples(const std::string& set) { return fs::path("samples") / (set + ".jsonl"); }
fs::path run_dir(TrainerKind kind) {
  return fs::path("runs") / (kind == TrainerKind::RS_THEN_DPO ? std::string("rs_then_dpo") : to_string(kind));
}
}  // namespace layout

namespace {

const char* const kSampleSets[] = {"train", "rm", "heldout"};

std::ostream& out(const Context& ctx) { return ctx.log ? *ctx.log : std::cout; }

/// Collects a command's files in a staging directory and moves them into the
/// workdir only once the command has succeeded.
class Outputs {
 public:
  Outputs(const Context& ctx, std::string command) : ctx_(ctx), command_(std::move(command)) {
    staging_ = ctx.workdir / (".staging-" + command_);
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }

  /// Staging path for a workdir-relative artifact. Checkpoints also declare
  /// their .json sidecar.
  fs::path path(const fs::path& rel) {
    const fs::path p = staging_ / rel;
    fs::create_directories(p.parent_path());
    declare(rel);
    if (rel.extension() == ".ckpt") declare(fs::path(rel.string() + ".json"));
    return p;
  }

  void declare(const fs::path& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
  }

  /// Moves the listed artifacts (all when empty) into the workdir.
  void commit(const std::vector<fs::path>& only = {}) {
    for (const auto& rel : files_) {
      if (!only.empty() && std::find(only.begin(), only.end(), rel) == only.end()) continue;
      const fs::path from = staging_ / rel;
      if (!fs::exists(from)) throw IoError("declared artifact was not written: " + rel.string());
      const fs::path to = ctx_.workdir / rel;
      fs::create_directories(to.parent_path());
      fs::rename(from, to);
    }
  }

  void write_manifest() {
    const fs::path rel = fs::path("manifests") / (command_ + ".json");
    std::vector<std::string> names;
    for (const auto& f : files_) names.push_back(f.generic_string());
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(ctx_.config.hash()));
    const json m = {{"command", command_},     {"argv", ctx_.argv},
                    {"version", version_string()}, {"seed", ctx_.config.seed},
                    {"config_hash", hash},     {"config", ctx_.config.to_json()},
                    {"artifacts", names}};
    std::ofstream f(path(rel));
    f << m.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + rel.string());
  }

  void finish() {
    write_manifest();
    commit();
  }

 private:
  const Context& ctx_;
  std::string command_;
  fs::path staging_;
  std::vector<fs::path> files_;
};

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError(what + " is not finite");
}

void require_finite(const BucketReport& r, const std::string& what) {
  for (double v : {r.mean_reward, r.frac_low, r.frac_mid, r.frac_high, r.halluc_rate}) require_finite(v, what);
}

void require_finite(const ModelHandle& m, const std::string& what) {
  if (!m.params.all_finite()) throw NumericalError(what + " has non-finite parameters");
}

fs::path input(const Context& ctx, const fs::path& rel) {
  const fs::path p = ctx.workdir / rel;
  if (!fs::exists(p)) throw IoError("missing input " + p.string() + " (run the producing command first)");
  return p;
}

std::vector<Prompt> load_prompt_set(const Context& ctx, const std::string& set) {
  return load_prompts_jsonl(input(ctx, layout::prompts(set)));
}

int prompt_count(const RunConfig& c, const std::string& set) {
  if (set == "train") return c.task.train_prompts;
  if (set == "val") return c.eval.validation_prompts;
  if (set == "rm") return c.task.rm_prompts;
  return c.task.rm_heldout_prompts;
}

const char* prompt_prefix(const std::string& set) {
  if (set == "train") return "t";
  if (set == "val") return "v";
  if (set == "rm") return "r";
  return "h";
}

void save_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

json report_json(const BucketReport& r) {
  return {{"mean_reward", r.mean_reward}, {"frac_low", r.frac_low},       {"frac_mid", r.frac_mid},
          {"frac_high", r.frac_high},     {"halluc_rate", r.halluc_rate}, {"n", r.n}};
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double last_validation(const TrainingLog& log) {
  for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it) {
    if (!std::isnan(it->mean_validation_reward)) return it->mean_validation_reward;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

TrainerEnv trainer_env(const Context& ctx, TrainerKind kind, const TrainerConfig& tc, ModelHandle& origin,
                       ModelHandle& rm) {
  const RunConfig& c = ctx.config;
  origin = load_model(input(ctx, layout::kOrigin).string(), ModelRole::POLICY);
  TrainerEnv env;
  env.origin = &origin;
  const fs::path rm_path = ctx.workdir / layout::kRewardModel;
  const bool on_policy = kind == TrainerKind::PPO || kind == TrainerKind::GRPO;
  if (on_policy && (tc.reward_source == Scorer::REWARD_MODEL || fs::exists(rm_path))) {
    rm = load_model(input(ctx, layout::kRewardModel).string(), ModelRole::REWARD_MODEL);
    env.reward_model = &rm;
  }
  env.train_prompts = load_prompt_set(ctx, "train");
  env.val_prompts = load_prompt_set(ctx, "val");
  if (!on_policy) {
    env.samples = load_samples_jsonl(input(ctx, layout::samples("train")));
    env.pairs = load_preference_pairs(input(ctx, layout::kPairs));
  }
  env.eval = c.eval_options();
  return env;
}

void save_trainer_outputs(Outputs& o, const fs::path& dir, const TrainerResult& res, bool with_checkpoint) {
  res.log.save_csv(o.path(dir / "log.csv"));
  const fs::path curves = dir / "curves";
  const fs::path staged = o.path(curves / "loss.csv").parent_path();
  for (const auto& f : export_curves(res.log, staged)) o.declare(curves / f.filename());
  if (with_checkpoint) save_model(o.path(dir / "best.ckpt").string(), res.best);
  save_json(o.path(dir / "summary.json"),
            {{"best_step", res.best_step},
             {"steps_run", res.steps_run},
             {"early_stopped", res.early_stopped},
             {"dpo_phase_start", res.dpo_phase_start},
             {"origin_validation", report_json(res.origin_report)},
             {"best_validation", report_json(res.best_report)}});
}

}  // namespace

void cmd_gen_data(const Context& ctx) {
  const RunConfig& c = ctx.config;
  Outputs o(ctx, "gen-data");
  const auto corpus = build_pretrain_corpus(c.task.corpus_prompts, c.task.corruption, split(Seed{c.seed}, "corpus"),
                                            c.task.vocab, "c");
  save_corpus_jsonl(o.path(layout::kCorpus), corpus);
  for (const std::string set : {"train", "val", "rm", "heldout"}) {
    const auto prompts =
        gen_prompts(prompt_count(c, set), split(Seed{c.seed}, "prompts/" + set), c.task.vocab, prompt_prefix(set));
    save_prompts_jsonl(o.path(layout::prompts(set)), prompts);
  }
  int corrupted = 0;
  for (const auto& r : corpus) corrupted += r.mode != CorruptionMode::CLEAN;
  save_json(o.path("data/stats.json"),
            {{"corpus_rows", corpus.size()}, {"corrupted_fraction", static_cast<double>(corrupted) / corpus.size()}});
  o.finish();
  out(ctx) << "gen-data: " << corpus.size() << " corpus rows, " << corrupted << " corrupted\n";
}

void cmd_pretrain(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto corpus = load_corpus_jsonl(input(ctx, layout::kCorpus));
  Outputs o(ctx, "pretrain");
  ModelHandle m = init_model(c.model_config(), split(Seed{c.seed}, "init"));
  const TrainingLog log = pretrain(m, corpus, c.pretrain, c.task.vocab, split(Seed{c.seed}, "pretrain"));
  require_finite(m, "origin policy");
  save_model(o.path(layout::kOrigin).string(), m);
  log.save_csv(o.path("logs/pretrain.csv"));
  o.finish();
  out(ctx) << "pretrain: final loss " << fmt(log.rows.back().loss, "%.4f") << "\n";
}

void cmd_sample(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const ModelHandle origin = load_model(input(ctx, layout::kOrigin).string(), ModelRole::POLICY);
  Outputs o(ctx, "sample");
  for (const std::string set : kSampleSets) {
    const auto prompts = load_prompt_set(ctx, set);
    const Seed stream = split(Seed{c.seed}, "sample/" + set);
    std::vector<GeneratedSample> samples;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      for (int k = 0; k < c.task.samples_per_prompt; ++k) {
        GeneratedSample s;
        s.prompt_id = prompts[i].prompt_id;
        s.sample_id = prompts[i].prompt_id + "-s" + std::to_string(k);
        s.tokens = generate_song(origin, prompts[i], c.task.vocab, c.trainer.temperature,
                                 split(split(stream, i), static_cast<std::uint64_t>(k)));
        samples.push_back(std::move(s));
      }
    }
    save_samples_jsonl(o.path(layout::raw_samples(set)), samples);
    out(ctx) << "sample: " << samples.size() << " " << set << " samples\n";
  }
  o.finish();
}

void cmd_score(const Context& ctx) {
  const RunConfig& c = ctx.config;
  Outputs o(ctx, "score");
  json summary = json::object();
  for (const std::string set : kSampleSets) {
    const auto prompts = load_prompt_set(ctx, set);
    std::unordered_map<std::string, const Prompt*> by_id;
    for (const auto& p : prompts) by_id.emplace(p.prompt_id, &p);
    const auto raw = load_samples_jsonl(input(ctx, layout::raw_samples(set)));
    const Seed stream = split(Seed{c.seed}, "score/" + set);
    std::vector<GeneratedSample> scored;
    scored.reserve(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      auto it = by_id.find(raw[j].prompt_id);
      if (it == by_id.end()) throw ConfigError("sample " + raw[j].sample_id + " has unknown prompt id");
      GeneratedSample s = score_sample(*it->second, raw[j].tokens, c.task.noise_rate, split(stream, j),
                                       c.pairing.thresholds(), c.task.vocab);
      s.sample_id = raw[j].sample_id;
      scored.push_back(std::move(s));
    }
    save_samples_jsonl(o.path(layout::samples(set)), scored);
    const BucketReport rep = bucket_report(scored);
    require_finite(rep, set + " sample report");
    summary[set] = report_json(rep);
    out(ctx) << "score: " << set << " mean reward " << fmt(rep.mean_reward, "%.4f") << ", low "
             << fmt(rep.frac_low, "%.4f") << "\n";
  }
  save_json(o.path("samples/summary.json"), summary);
  o.finish();
}

void cmd_pair(const Context& ctx) {
  const auto samples = load_samples_jsonl(input(ctx, layout::samples("train")));
  Outputs o(ctx, "pair");
  const PreferenceDataset ds = build_dataset(samples, ctx.config.pairing);
  const fs::path p = o.path(layout::kPairs);
  o.declare(fs::path(std::string(layout::kPairs) + ".stats.json"));
  save_preference_dataset(p, ds);
  o.finish();
  out(ctx) << "pair: " << ds.stats.n_pairs << " pairs from " << ds.stats.n_groups << " groups\n";
}

double cmd_train_rm(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const ModelHandle origin = load_model(input(ctx, layout::kOrigin).string(), ModelRole::POLICY);
  const auto train = reward_examples(load_samples_jsonl(input(ctx, layout::samples("rm"))),
                                     load_prompt_set(ctx, "rm"), c.task.vocab);
  const auto heldout = reward_examples(load_samples_jsonl(input(ctx, layout::samples("heldout"))),
                                       load_prompt_set(ctx, "heldout"), c.task.vocab);
  Outputs o(ctx, "train-rm");
  ModelHandle rm = with_head(origin, HeadKind::REWARD, split(Seed{c.seed}, "rm/init"));
  const TrainingLog log = train_reward_model(rm, train, c.reward_model, split(Seed{c.seed}, "rm/train"));
  require_finite(rm, "reward model");
  const double l1 = reward_l1(rm, heldout);
  require_finite(l1, "held-out L1");
  double mean = 0.0;
  for (const auto& e : train) mean += e.target;
  mean /= static_cast<double>(train.size());
  double baseline = 0.0;
  for (const auto& e : heldout) baseline += std::abs(e.target - mean);
  baseline /= static_cast<double>(heldout.size());
  save_model(o.path(layout::kRewardModel).string(), rm);
  log.save_csv(o.path("logs/reward_model.csv"));
  save_json(o.path("metrics/reward_model.json"), {{"heldout_l1", l1},
                                                  {"constant_baseline_l1", baseline},
                                                  {"n_train", train.size()},
                                                  {"n_heldout", heldout.size()}});
  o.finish();
  out(ctx) << "train-rm: held-out L1 " << fmt(l1, "%.4f") << " (constant predictor " << fmt(baseline, "%.4f") << ")\n";
  return l1;
}

TrainerResult cmd_train(const Context& ctx, TrainerKind kind) {
  TrainerConfig tc = ctx.config.trainer;
  tc.kind = kind;
  ModelHandle origin;
  ModelHandle rm;
  const TrainerEnv env = trainer_env(ctx, kind, tc, origin, rm);
  const fs::path dir = layout::run_dir(kind);
  const fs::path best_rel = dir / "best.ckpt";
  Outputs o(ctx, "train-" + dir.filename().string());
  TrainerHooks hooks;
  hooks.on_new_best = [&](const ModelHandle& best, int) { save_model(o.path(best_rel).string(), best); };
  TrainerResult res;
  try {
    res = run_trainer(tc, env, split(Seed{ctx.config.seed}, "trainer"), hooks);
  } catch (const NumericalError&) {
    // keep the last good checkpoint
    o.commit({best_rel, fs::path(best_rel.string() + ".json")});
    throw;
  }
  require_finite(res.best, "best checkpoint");
  require_finite(res.best_report, "validation report");
  save_trainer_outputs(o, dir, res, true);
  o.finish();
  out(ctx) << "train " << to_string(kind) << ": origin " << fmt(res.origin_report.mean_reward, "%.4f") << " -> best "
           << fmt(res.best_report.mean_reward, "%.4f") << " at step " << res.best_step << " (" << res.steps_run
           << " steps)\n";
  return res;
}

BucketReport cmd_eval(const Context& ctx, const std::string& model, const std::string& name, Scorer scorer) {
  const RunConfig& c = ctx.config;
  fs::path path;
  if (model == "origin") {
    path = layout::kOrigin;
  } else if (model == "rs" || model == "dpo" || model == "rs+dpo" || model == "rs_then_dpo" || model == "ppo" ||
             model == "grpo") {
    path = layout::run_dir(trainer_kind_from_string(model)) / "best.ckpt";
  } else {
    path = model;
  }
  const fs::path full = path.is_absolute() ? path : ctx.workdir / path;
  if (!fs::exists(full)) throw IoError("missing checkpoint " + full.string());
  const ModelHandle policy = load_model(full.string(), ModelRole::POLICY);
  ModelHandle rm;
  EvalOptions opts = c.eval_options();
  opts.scorer = scorer;
  if (scorer == Scorer::REWARD_MODEL) {
    rm = load_model(input(ctx, layout::kRewardModel).string(), ModelRole::REWARD_MODEL);
    opts.reward_model = &rm;
  }
  const auto prompts = load_prompt_set(ctx, "val");
  Outputs o(ctx, "eval-" + name);
  const EvalResult res = evaluate_policy(policy, prompts, opts, split(Seed{c.seed}, "eval"));
  require_finite(res.report, "eval report");
  save_report_json(o.path(fs::path("eval") / (name + ".report.json")), res.report);
  save_distribution_csv(o.path(fs::path("eval") / (name + ".distribution.csv")), res.records);
  o.finish();
  out(ctx) << "eval " << name << ": mean " << fmt(res.report.mean_reward, "%.4f") << " low "
           << fmt(res.report.frac_low, "%.4f") << " mid " << fmt(res.report.frac_mid, "%.4f") << " high "
           << fmt(res.report.frac_high, "%.4f") << " halluc " << fmt(res.report.halluc_rate, "%.4f") << "\n";
  return res.report;
}

void cmd_report(const Context& ctx) {
  const fs::path dir = ctx.workdir / "eval";
  if (!fs::exists(dir)) throw IoError("no eval reports under " + dir.string());
  std::vector<std::pair<std::string, BucketReport>> reports;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    const std::string suffix = ".report.json";
    if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
      reports.emplace_back(f.substr(0, f.size() - suffix.size()), load_report_json(e.path()));
    }
  }
  if (reports.empty()) throw IoError("no eval reports under " + dir.string());
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    if ((a.first == "origin") != (b.first == "origin")) return a.first == "origin";
    return a.first < b.first;
  });
  const BucketReport* origin = reports.front().first == "origin" ? &reports.front().second : nullptr;

  Outputs o(ctx, "report");
  std::ofstream csv(o.path("report/table.csv"));
  std::ofstream md(o.path("report/table.md"));
  csv << "model,mean_reward,frac_low,frac_mid,frac_high,halluc_rate,n,mean_reward_delta,mean_reward_rel,frac_low_delta\n";
  md << "| model | mean reward | r<0.7 | 0.7-0.8 | r>0.8 | hallucinated | vs origin |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& [name, r] : reports) {
    std::string dmean;
    std::string drel;
    std::string dlow;
    std::string note = "-";
    if (origin && name != "origin") {
      const ReportDeltas d = compare_reports(*origin, r);
      dmean = fmt(d.mean_reward.absolute);
      drel = fmt(d.mean_reward.relative);
      dlow = fmt(d.frac_low.absolute);
      note = fmt(100 * d.mean_reward.relative, "%+.2f%% reward, ") + fmt(100 * d.frac_low.absolute, "%+.2f pts low");
    }
    csv << name << ',' << fmt(r.mean_reward) << ',' << fmt(r.frac_low) << ',' << fmt(r.frac_mid) << ','
        << fmt(r.frac_high) << ',' << fmt(r.halluc_rate) << ',' << r.n << ',' << dmean << ',' << drel << ',' << dlow
        << '\n';
    md << "| " << name << " | " << fmt(r.mean_reward, "%.3f") << " | " << fmt(100 * r.frac_low, "%.2f%%") << " | "
       << fmt(100 * r.frac_mid, "%.2f%%") << " | " << fmt(100 * r.frac_high, "%.2f%%") << " | "
       << fmt(100 * r.halluc_rate, "%.2f%%") << " | " << note << " |\n";
  }
  csv.close();
  md.close();
  if (!csv || !md) throw IoError("write failed: report tables");
  o.finish();
  out(ctx) << "report: " << reports.size() << " models\n";
}

std::vector<SweepCell> sweep_grid(const RunConfig& cfg, const std::string& family) {
  std::vector<SweepCell> cells;
  if (family == "ppo") {
    for (double alpha : {0.0, 0.0005}) {
      for (double lambda : {0.99, 1.0}) {
        for (double entropy : {0.0, 0.01}) {
          SweepCell c{"alpha" + fmt(alpha, "%g") + "_lambda" + fmt(lambda, "%g") + "_entropy" + fmt(entropy, "%g"),
                      cfg.trainer};
          c.trainer.kind = TrainerKind::PPO;
          c.trainer.ppo.alpha = alpha;
          c.trainer.ppo.lambda = lambda;
          c.trainer.ppo.entropy_weight = entropy;
          cells.push_back(c);
        }
      }
    }
  } else if (family == "grpo") {
    for (bool token : {false, true}) {
      SweepCell c{token ? "token_level" : "sequence_level", cfg.trainer};
      c.trainer.kind = TrainerKind::GRPO;
      c.trainer.grpo.token_level_loss = token;
      cells.push_back(c);
    }
  } else {
    throw ConfigError("sweep: unknown family '" + family + "' (expected ppo or grpo)");
  }
  return cells;
}

std::vector<SweepRow> cmd_sweep(const Context& ctx, const std::string& family, const std::vector<SweepCell>& cells,
                                int seeds) {
  if (seeds < 1) throw ConfigError("sweep: --seeds must be >= 1");
  if (cells.empty()) throw ConfigError("sweep: no cells");
  const TrainerKind kind = cells.front().trainer.kind;
  ModelHandle origin;
  ModelHandle rm;
  const TrainerEnv env = trainer_env(ctx, kind, cells.front().trainer, origin, rm);
  Outputs o(ctx, "sweep-" + family);
  const fs::path root = fs::path("sweep") / family;
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) {
    TrainerConfig tc = cell.trainer;
    tc.validation.patience = INT_MAX;
    for (int k = 0; k < seeds; ++k) {
      const TrainerResult res =
          run_trainer(tc, env, split(split(Seed{ctx.config.seed}, "sweep"), static_cast<std::uint64_t>(k)));
      save_trainer_outputs(o, root / cell.name / ("seed" + std::to_string(k)), res, false);
      SweepRow r{cell.name, k, res.origin_report.mean_reward, last_validation(res.log), res.best_report.mean_reward,
                 res.best_step};
      require_finite(r.final_validation_reward, "final validation reward");
      out(ctx) << "sweep " << family << " " << cell.name << " seed " << k << ": final "
               << fmt(r.final_validation_reward, "%.4f") << " best " << fmt(r.best_validation_reward, "%.4f") << "\n";
      rows.push_back(r);
    }
  }
  std::ofstream csv(o.path(root / "summary.csv"));
  csv << "cell,seed,origin_validation_reward,final_validation_reward,best_validation_reward,best_step\n";
  for (const auto& r : rows) {
    csv << r.cell << ',' << r.seed_index << ',' << fmt(r.origin_validation_reward) << ','
        << fmt(r.final_validation_reward) << ',' << fmt(r.best_validation_reward) << ',' << r.best_step << '\n';
  }
  csv.close();
  if (!csv) throw IoError("write failed: sweep summary");
  o.finish();
  return rows;
}

fs::path resolve_workdir(const std::string& flag, const RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* env = std::getenv("LYRICRL_OUTPUT_ROOT");
  const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
  return root / stamp;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"lyricrl: preference optimization on a synthetic lyric-to-song task"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", version_string());

  std::string config_path;
  std::string workdir_flag;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  bool print_config = false;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("-w,--workdir", workdir_flag, "Run directory (default: timestamped under $LYRICRL_OUTPUT_ROOT)");
  app.add_option("--seed", seed, "Root seed (overrides the config)");
  app.add_option("--set", overrides, "Override a config value, e.g. --set trainer.dpo.beta=0.5");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  auto* gen = app.add_subcommand("gen-data", "Prompts and the pretraining corpus");
  auto* pre = app.add_subcommand("pretrain", "Train the Origin policy on the corpus");
  auto* smp = app.add_subcommand("sample", "Sample songs from the Origin policy");
  auto* scr = app.add_subcommand("score", "Score samples against their lyrics");
  auto* par = app.add_subcommand("pair", "Build preference pairs from scored samples");
  auto* trm = app.add_subcommand("train-rm", "Train the reward model");
  auto* trn = app.add_subcommand("train", "Run a trainer: rs, dpo, rs+dpo, ppo or grpo");
  std::string trainer_name;
  trn->add_option("kind", trainer_name, "Trainer")->required()->check(
      CLI::IsMember({"rs", "dpo", "rs+dpo", "rs_then_dpo", "ppo", "grpo"}));
  auto* evl = app.add_subcommand("eval", "Score a policy on the validation prompts");
  std::string eval_model = "origin";
  std::string eval_name;
  std::string eval_scorer = "ground_truth";
  evl->add_option("--model", eval_model, "origin, a trainer name, or a checkpoint path");
  evl->add_option("--name", eval_name, "Report name (default: the model argument)");
  evl->add_option("--scorer", eval_scorer, "ground_truth or reward_model")
      ->check(CLI::IsMember({"ground_truth", "reward_model"}));
  auto* rep = app.add_subcommand("report", "Bucket table over all eval reports");
  auto* swp = app.add_subcommand("sweep", "Ablation grid: ppo (alpha x lambda x entropy) or grpo (token level)");
  std::string family;
  int sweep_seeds = 3;
  swp->add_option("family", family, "ppo or grpo")->required()->check(CLI::IsMember({"ppo", "grpo"}));
  swp->add_option("--seeds", sweep_seeds, "Trainer seeds per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  Context ctx;
  try {
    if (seed >= 0) overrides.push_back("seed=" + std::to_string(seed));
    ctx.config = load_run_config(config_path, overrides);
    if (print_config) {
      std::cout << ctx.config.to_json().dump(2) << '\n';
      return 0;
    }
    ctx.workdir = resolve_workdir(workdir_flag, ctx.config);
    fs::create_directories(ctx.workdir);
    for (int i = 1; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
    std::cerr << "workdir: " << ctx.workdir.string() << '\n';

    if (*gen) cmd_gen_data(ctx);
    if (*pre) cmd_pretrain(ctx);
    if (*smp) cmd_sample(ctx);
    if (*scr) cmd_score(ctx);
    if (*par) cmd_pair(ctx);
    if (*trm) cmd_train_rm(ctx);
    if (*trn) cmd_train(ctx, trainer_kind_from_string(trainer_name));
    if (*evl) {
      const Scorer s = eval_scorer == "reward_model" ? Scorer::REWARD_MODEL : Scorer::GROUND_TRUTH_PER;
      std::string name = eval_name.empty() ? eval_model : eval_name;
      std::replace_if(name.begin(), name.end(), [](char ch) { return ch == '/' || ch == '\\' || ch == '+'; }, '_');
      cmd_eval(ctx, eval_model, name, s);
    }
    if (*rep) cmd_report(ctx);
    if (*swp) cmd_sweep(ctx, family, sweep_grid(ctx.config, family), sweep_seeds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace lyricrl::cli
