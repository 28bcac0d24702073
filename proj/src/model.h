#ifndef MELVAE_MODEL_H
#define MELVAE_MODEL_H

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corpus.h"
#include "rng.h"
#include "tensor.h"

namespace melvae {

// Network dimensions and objective weights. The recurrent widths and latent
// size are free choices; the frame layout (48 pitches per step) is not.
struct ModelConfig {
  int hidden = 64;        // GRU units per direction
  int dense = 256;        // width of each dense layer
  int dense_layers = 2;
  int latent = 32;        // d_z
  int frames = STEPS_PER_PHRASE;
  bool multitask = false;
  double beta = 1.0;
  double lambda_genre = 1.0;

  int frameDim() const { return PITCH_ROWS; }
  int rollDim() const { return frames * PITCH_ROWS; }
  int genreDim() const { return multitask ? 2 : 0; }
};

std::string modelConfigJson(const ModelConfig& config);
// Reads the known fields and ignores extra keys (checkpoint headers carry
// training metadata alongside the dimensions).
ModelConfig modelConfigFromJson(const std::string& text);

struct DenseLayer {
  Tensor w, b;
};

// BGRU over the frame sequence, all step outputs concatenated, then a tanh
// dense stack. Shared between the encoder and the genre classifier.
struct EncoderStack {
  GruParams fwd, bwd;
  std::vector<DenseLayer> dense;
};

struct EncoderParams {
  EncoderStack stack;
  DenseLayer mu, log_var;  // linear heads, each d_z wide
};

struct DecoderParams {
  std::vector<DenseLayer> dense;  // tanh stack over [z;y]
  DenseLayer h0;                  // tanh head producing the GRU initial state
  GruParams gru;                  // unidirectional, [z;y] as constant input
  DenseLayer out;                 // per-step projection to 48 pitches
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;
};

// Same trunk as the encoder with a single sigmoid output unit.
struct ClassifierParams {
  ModelConfig config;
  EncoderStack stack;
  DenseLayer head;
};

ModelParams buildModel(const ModelConfig& config, uint64_t seed);
ClassifierParams buildClassifier(const ModelConfig& config, uint64_t seed);

// Row-wise batch of posterior parameters, each [batch, d_z].
struct LatentBatch {
  Tensor mu, log_var;
};

// Losses built inside the graph; `genre` is null for the plain objective.
struct LossParts {
  Tensor total, recon, lat, genre;
};

// x rows are flattened rolls (frames * 48 cells, frame-major).
LatentBatch encodeBatch(Graph& g, const ModelParams& params, const Tensor& x);

// z = mu + exp(log_var / 2) * eps. The noise is a constant: gradients reach
// mu and log_var only.
Tensor reparameterizeBatch(Graph& g, const LatentBatch& dist, const Tensor& eps);
Tensor reparameterizeBatch(Graph& g, const LatentBatch& dist, Rng& rng);

// y is the [batch, 2] one-hot genre block, required exactly when the model
// is configured for multitask conditioning.
Tensor decodeBatch(Graph& g, const ModelParams& params, const Tensor& z,
                   const Tensor* y = nullptr);

// Probability of Jazz per row, [batch, 1].
Tensor classifierBatch(Graph& g, const ClassifierParams& params, const Tensor& x);

// recon: BCE summed over cells, averaged over the batch.
// lat: KLD(q(z|x) || N(0,I)) = 1/2 sum_i (mu_i^2 + exp(lv_i) - 1 - lv_i),
// summed over dims, averaged over the batch. total = recon + beta * lat.
LossParts elboLoss(Graph& g, const Tensor& x, const Tensor& probs, const LatentBatch& dist,
                   double beta);

// Adds lambda * BCE(yhat, jazz indicator of y); y is [batch, 2] one-hot with
// Jazz = [0,1], so the indicator is column 1.
LossParts multitaskLoss(Graph& g, const Tensor& x, const Tensor& probs, const LatentBatch& dist,
                        const Tensor& yhat, const Tensor& y, double beta, double lambdaGenre);

// Optimizer view (encoder + decoder; the classifier trains separately and
// stays frozen during multitask runs).
std::vector<Tensor> trainableParams(const ModelParams& params);
std::vector<Tensor> classifierParamList(const ClassifierParams& params);

// Stable name -> tensor listing used by the checkpoint container.
std::vector<std::pair<std::string, Tensor>> namedParams(const ModelParams& params);
std::vector<std::pair<std::string, Tensor>> namedClassifierParams(const ClassifierParams& params);

Checkpoint modelCheckpoint(const ModelParams& params, const std::string& configJson);
ModelParams modelFromCheckpoint(const Checkpoint& ckpt);
Checkpoint classifierCheckpoint(const ClassifierParams& params, const std::string& configJson);
ClassifierParams classifierFromCheckpoint(const Checkpoint& ckpt);

// One-hot rows for a batch of genres: Jazz = [0,1], anything else = [1,0].
Tensor genreBlock(const std::vector<Genre>& genres);

}  // namespace melvae

#endif  // MELVAE_MODEL_H
