#ifndef MELVAE_EXPERIMENT_H
#define MELVAE_EXPERIMENT_H

#include <string>
#include <vector>

#include "model.h"
#include "train.h"

namespace melvae {

// One configuration document drives a whole run; every field has a default
// except the corpus paths. Parsing is strict: unknown keys are rejected.
struct RunConfig {
  Regime regime = Regime::BaselineTarget;
  std::vector<int> ratios{1, 2, 3, 4, 5, 6};  // used by the source+target regimes
  std::string source_path;
  std::string target_path;
  std::string output_dir = "runs/out";
  uint64_t seed = 0;

  // train block
  int epochs = 100;
  int stage2_epochs = 120;
  int batch_size = 32;
  double lr = 1e-3;
  bool reset_moments = false;
  bool kl_warmup = false;
  int checkpoint_every = 0;
  int classifier_epochs = 30;

  // model block (multitask flag and frame count are managed by the driver)
  ModelConfig model;

  // eval block
  bool rests = false;
  int grid_points = 1000;
  int generated = 0;  // phrases per run; 0 = match the target train split
  bool normalize = false;  // histogram figures only
};

bool regimeUsesSource(Regime regime);
Regime regimeFromName(const std::string& name);

RunConfig parseRunConfig(const std::string& text);
RunConfig loadRunConfig(const std::string& path);

// Canonical resolved form; the copy written into every output directory.
std::string runConfigJson(const RunConfig& config);

struct ExperimentRun {
  std::string label;    // "R3", "baseline-target", ...
  std::string table_label;  // "Method 1 (R=3)", "Baseline 2 (target)", ...
  int ratio = 0;
  double average_oa = 0.0;
};

struct ExperimentSummary {
  std::vector<ExperimentRun> runs;
  double classifier_accuracy = -1.0;  // < 0 when no classifier was trained
};

// The summary.csv text: run,average_oa rows under the table labels.
std::string summaryTable(const ExperimentSummary& summary);

// Trains the configured regime per requested R, generates, evaluates OA and
// writes logs, checkpoints, per-run reports, the combined grid and the
// summary under output_dir. Deterministic given the config.
ExperimentSummary runExperiment(const RunConfig& config);

struct TrainingRunInfo {
  std::string label;
  std::string directory;
  double final_recon = 0.0;
  double classifier_accuracy = -1.0;  // < 0 when no classifier was trained
};

// One training run only — the first requested R for the per-R regimes — with
// the log and checkpoints written but nothing generated or evaluated.
TrainingRunInfo runTraining(const RunConfig& config);

// The per-run seed, documented so external tools can reproduce a single cell
// of the grid: deriveSeed(master, "ratio", R) with R = 0 for the baselines.
uint64_t experimentRunSeed(uint64_t master, int ratio);

}  // namespace melvae

#endif  // MELVAE_EXPERIMENT_H
