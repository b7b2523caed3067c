#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

#include "lyricrl/eval/eval_harness.hpp"
#include "lyricrl/train/trainers.hpp"

namespace lyricrl::cli {

/// Git-describe style version recorded in every manifest.
std::string version_string();

struct Context {
  RunConfig config;
  std::filesystem::path workdir;
  /// Command line as typed, recorded in manifests.
  std::vector<std::string> argv;
  std::ostream* log = nullptr;
};

/// Workdir-relative artifact locations.
namespace layout {
inline const char* const kCorpus = "data/corpus.jsonl";
std::filesystem::path prompts(const std::string& set);       // train | val | rm | heldout
std::filesystem::path raw_samples(const std::string& set);   // train | rm | heldout
std::filesystem::path samples(const std::string& set);
inline const char* const kPairs = "pairs/pairs.jsonl";
inline const char* const kOrigin = "models/origin.ckpt";
inline const char* const kRewardModel = "models/reward.ckpt";
std::filesystem::path run_dir(TrainerKind kind);
}  // namespace layout

void cmd_gen_data(const Context& ctx);
void cmd_pretrain(const Context& ctx);
void cmd_sample(const Context& ctx);
void cmd_score(const Context& ctx);
void cmd_pair(const Context& ctx);
/// Returns the held-out L1.
double cmd_train_rm(const Context& ctx);
TrainerResult cmd_train(const Context& ctx, TrainerKind kind);

/// `model` is "origin", a trainer name (rs, dpo, rs+dpo, ppo, grpo) or a
/// checkpoint path. Reports land in eval/<name>.report.json.
BucketReport cmd_eval(const Context& ctx, const std::string& model, const std::string& name, Scorer scorer);
/// Bucket table over every eval report, with deltas against "origin".
void cmd_report(const Context& ctx);

struct SweepCell {
  std::string name;
  TrainerConfig trainer;
};

/// "ppo": alpha x lambda x entropy grid; "grpo": token-level loss off / on.
std::vector<SweepCell> sweep_grid(const RunConfig& cfg, const std::string& family);

struct SweepRow {
  std::string cell;
  int seed_index = 0;
  double origin_validation_reward = 0.0;
  double final_validation_reward = 0.0;
  double best_validation_reward = 0.0;
  int best_step = 0;
};

/// Runs every cell for `seeds` trainer seeds with early stopping disabled so
/// all cells end at the same step. Writes per-run logs and sweep/<family>/summary.csv.
std::vector<SweepRow> cmd_sweep(const Context& ctx, const std::string& family, const std::vector<SweepCell>& cells,
                                int seeds);

/// Picks --workdir, else config.output_dir, else a timestamped directory under
/// $LYRICRL_OUTPUT_ROOT (default "runs").
std::filesystem::path resolve_workdir(const std::string& flag, const RunConfig& cfg);

/// Full command-line entry point; returns the process exit status.
int run_cli(int argc, char** argv);

}  // namespace lyricrl::cli
