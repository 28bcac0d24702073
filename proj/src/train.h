#ifndef MELVAE_TRAIN_H
#define MELVAE_TRAIN_H

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corpus.h"
#include "model.h"

namespace melvae {

enum class Regime { BaselineSource, BaselineTarget, FineTune, Multitask };

const char* regimeName(Regime regime);

// Knobs for one training run. The master seed fans out into independent
// streams (init, per-epoch shuffle, per-epoch noise, ratio sampling).
struct TrainConfig {
  Regime regime = Regime::BaselineTarget;
  int ratio = 0;            // R, required for the source+target regimes
  int epochs = 100;         // single stage, or stage 1 of fine-tuning
  int stage2_epochs = 120;  // covers every leg of the fine-tune schedule
  int batch_size = 32;
  double lr = 1e-3;         // pre-training rate
  bool reset_moments = false;  // restart ADAM moments at stage 2
  bool kl_warmup = false;      // beta ramps 0 -> full over the first 10 epochs
  int checkpoint_every = 0;    // extra checkpoints every K epochs; 0 = stage ends only
  uint64_t seed = 0;
  ModelConfig model;  // dims plus beta / lambda_genre
};

// Throws DataError when the knobs are inconsistent with the regime.
void validateTrainConfig(const TrainConfig& config);

struct TrainRecord {
  int epoch;  // contiguous from 0 within each stage
  int stage;
  double lr;
  double l_recon;
  double l_lat;
  double l_genre;  // meaningful only when has_genre
  double seconds;
  bool has_genre;
};

struct TrainLog {
  std::vector<TrainRecord> records;
};

// epoch,stage,lr,l_recon,l_lat,l_genre,seconds; l_genre blank when absent.
std::string trainLogCsv(const TrainLog& log);
void writeTrainLog(const TrainLog& log, const std::string& path);

// The fine-tuning step size: 1e-5 while t < 40, 1e-7 while 40 <= t < 80,
// then 1e-9.
double finetuneLearningRate(int t);

struct TrainResult {
  ModelParams params;
  TrainLog log;
  // Labeled snapshots ("stage1", "final", "stage<k>-epoch<e>"), in the order
  // they were taken.
  std::vector<std::pair<std::string, Checkpoint>> checkpoints;
};

// Plain Eq.-style VAE training of the corpus's train split at the flat
// pre-training rate.
TrainResult trainBaseline(const TrainConfig& config, const Corpus& corpus);

// Stage 1 pre-trains on sample_ratio(source, target, R) and is bit-identical
// to a BaselineSource run on that sample; stage 2 continues on the target
// under the piecewise schedule, ADAM moments carried over unless reset.
TrainResult trainFinetune(const TrainConfig& config, const Corpus& source, const Corpus& target);

// Union training: sampled source rows labeled [1,0], target rows [0,1]; the
// genre term differentiates through the frozen classifier.
TrainResult trainMultitask(const TrainConfig& config, const Corpus& source, const Corpus& target,
                           const ClassifierParams& classifier);

struct ClassifierResult {
  ClassifierParams params;
  double accuracy;  // held-out (test splits when present, else training data)
  TrainLog log;
};

// BCE training toward 1 for target-corpus rows and 0 for source rows.
ClassifierResult trainClassifier(const TrainConfig& config, const Corpus& source,
                                 const Corpus& target);

// z ~ N(0, I) per phrase, decoded and binarized at threshold 0.5. The genre
// argument is required exactly for multitask models.
Corpus generate(const ModelParams& params, int count, uint64_t seed,
                std::optional<Genre> genre = std::nullopt);

}  // namespace melvae

#endif  // MELVAE_TRAIN_H
