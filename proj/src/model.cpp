#include "model.h"

#include <unordered_map>

#include "errors.h"
#include "json.hpp"

namespace melvae {

namespace {

DenseLayer makeDense(int in, int out, Rng& rng) {
  DenseLayer layer;
  layer.w = makeTensor({in, out}, true);
  initUniform(layer.w, rng, in);
  layer.b = makeTensor({out}, true);
  return layer;
}

EncoderStack buildStack(const ModelConfig& config, Rng& rng) {
  EncoderStack stack;
  stack.fwd = makeGruParams(config.frameDim(), config.hidden, rng);
  stack.bwd = makeGruParams(config.frameDim(), config.hidden, rng);
  int width = config.frames * 2 * config.hidden;
  for (int l = 0; l < config.dense_layers; ++l) {
    stack.dense.push_back(makeDense(width, config.dense, rng));
    width = config.dense;
  }
  return stack;
}

// Width of the stack's final output (the concatenation itself when there are
// no dense layers).
int stackWidth(const ModelConfig& config) {
  return config.dense_layers > 0 ? config.dense : config.frames * 2 * config.hidden;
}

Tensor runStack(Graph& g, const EncoderStack& stack, const ModelConfig& config, const Tensor& x) {
  if (x->shape.size() != 2 || x->shape[1] != config.rollDim()) {
    throw DataError("encoder: expected [batch," + std::to_string(config.rollDim()) +
                    "] input, got " + shapeString(*x));
  }
  std::vector<Tensor> frames;
  frames.reserve(static_cast<size_t>(config.frames));
  for (int t = 0; t < config.frames; ++t) {
    frames.push_back(g.slice(x, 1, t * config.frameDim(), config.frameDim()));
  }
  std::vector<Tensor> steps = bgru(g, frames, stack.fwd, stack.bwd);
  Tensor h = g.concat(steps, 1);
  for (const DenseLayer& layer : stack.dense) {
    h = g.tanh(g.addRowBias(g.matmul(h, layer.w), layer.b));
  }
  return h;
}

void appendStack(std::vector<Tensor>& out, const EncoderStack& stack) {
  for (const Tensor& t : gruParamList(stack.fwd)) out.push_back(t);
  for (const Tensor& t : gruParamList(stack.bwd)) out.push_back(t);
  for (const DenseLayer& layer : stack.dense) {
    out.push_back(layer.w);
    out.push_back(layer.b);
  }
}

void nameGru(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const GruParams& p) {
  out.emplace_back(prefix + ".w_r", p.w_r);
  out.emplace_back(prefix + ".b_r", p.b_r);
  out.emplace_back(prefix + ".w_u", p.w_u);
  out.emplace_back(prefix + ".b_u", p.b_u);
  out.emplace_back(prefix + ".w_h", p.w_h);
  out.emplace_back(prefix + ".b_h", p.b_h);
}

void nameDense(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
               const DenseLayer& layer) {
  out.emplace_back(prefix + ".w", layer.w);
  out.emplace_back(prefix + ".b", layer.b);
}

void nameStack(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
               const EncoderStack& stack) {
  nameGru(out, prefix + ".gru_f", stack.fwd);
  nameGru(out, prefix + ".gru_b", stack.bwd);
  for (size_t l = 0; l < stack.dense.size(); ++l) {
    nameDense(out, prefix + ".dense" + std::to_string(l), stack.dense[l]);
  }
}

// Copies checkpoint arrays into a freshly built parameter set by name.
void fillFromArrays(const std::vector<std::pair<std::string, Tensor>>& expected,
                    const Checkpoint& ckpt) {
  std::unordered_map<std::string, Tensor> byName;
  for (const auto& [name, tensor] : ckpt.arrays) {
    if (!byName.emplace(name, tensor).second) {
      throw DataError("checkpoint: duplicate array " + name);
    }
  }
  for (const auto& [name, dst] : expected) {
    auto it = byName.find(name);
    if (it == byName.end()) throw DataError("checkpoint: missing array " + name);
    if (it->second->shape != dst->shape) {
      throw DataError("checkpoint: shape mismatch for " + name + ": " + shapeString(*it->second) +
                      " vs " + shapeString(*dst));
    }
    dst->values = it->second->values;
  }
  if (byName.size() != expected.size()) {
    throw DataError("checkpoint: unexpected extra arrays");
  }
}

}  // namespace

std::string modelConfigJson(const ModelConfig& config) {
  nlohmann::ordered_json j;
  j["hidden"] = config.hidden;
  j["dense"] = config.dense;
  j["dense_layers"] = config.dense_layers;
  j["latent"] = config.latent;
  j["frames"] = config.frames;
  j["multitask"] = config.multitask;
  j["beta"] = config.beta;
  j["lambda_genre"] = config.lambda_genre;
  return j.dump();
}

ModelConfig modelConfigFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  ModelConfig config;
  config.hidden = j.value("hidden", config.hidden);
  config.dense = j.value("dense", config.dense);
  config.dense_layers = j.value("dense_layers", config.dense_layers);
  config.latent = j.value("latent", config.latent);
  config.frames = j.value("frames", config.frames);
  config.multitask = j.value("multitask", config.multitask);
  config.beta = j.value("beta", config.beta);
  config.lambda_genre = j.value("lambda_genre", config.lambda_genre);
  if (config.hidden < 1 || config.dense < 1 || config.dense_layers < 0 || config.latent < 1 ||
      config.frames < 1) {
    throw DataError("model config: non-positive dimension");
  }
  return config;
}

ModelParams buildModel(const ModelConfig& config, uint64_t seed) {
  Rng rng(seed);
  ModelParams params;
  params.config = config;
  params.encoder.stack = buildStack(config, rng);
  int trunk = stackWidth(config);
  params.encoder.mu = makeDense(trunk, config.latent, rng);
  params.encoder.log_var = makeDense(trunk, config.latent, rng);

  int zy = config.latent + config.genreDim();
  int width = zy;
  for (int l = 0; l < config.dense_layers; ++l) {
    params.decoder.dense.push_back(makeDense(width, config.dense, rng));
    width = config.dense;
  }
  params.decoder.h0 = makeDense(width, config.hidden, rng);
  params.decoder.gru = makeGruParams(zy, config.hidden, rng);
  params.decoder.out = makeDense(config.hidden, config.frameDim(), rng);
  return params;
}

ClassifierParams buildClassifier(const ModelConfig& config, uint64_t seed) {
  Rng rng(seed);
  ClassifierParams params;
  params.config = config;
  params.stack = buildStack(config, rng);
  params.head = makeDense(stackWidth(config), 1, rng);
  return params;
}

LatentBatch encodeBatch(Graph& g, const ModelParams& params, const Tensor& x) {
  Tensor trunk = runStack(g, params.encoder.stack, params.config, x);
  LatentBatch dist;
  dist.mu = g.addRowBias(g.matmul(trunk, params.encoder.mu.w), params.encoder.mu.b);
  dist.log_var =
      g.addRowBias(g.matmul(trunk, params.encoder.log_var.w), params.encoder.log_var.b);
  return dist;
}

Tensor reparameterizeBatch(Graph& g, const LatentBatch& dist, const Tensor& eps) {
  if (eps->shape != dist.mu->shape) {
    throw DataError("reparameterize: noise shape " + shapeString(*eps) + " vs " +
                    shapeString(*dist.mu));
  }
  return g.add(dist.mu, g.mul(g.exp(g.scale(dist.log_var, 0.5)), eps));
}

Tensor reparameterizeBatch(Graph& g, const LatentBatch& dist, Rng& rng) {
  Tensor eps = makeTensor(dist.mu->shape);
  for (double& v : eps->values) v = rng.normal();
  return reparameterizeBatch(g, dist, eps);
}

Tensor decodeBatch(Graph& g, const ModelParams& params, const Tensor& z, const Tensor* y) {
  const ModelConfig& config = params.config;
  if (z->shape.size() != 2 || z->shape[1] != config.latent) {
    throw DataError("decode: expected [batch," + std::to_string(config.latent) +
                    "] latent, got " + shapeString(*z));
  }
  if (config.multitask && y == nullptr) {
    throw DataError("decode: genre label required for a multitask model");
  }
  if (!config.multitask && y != nullptr) {
    throw DataError("decode: genre label supplied to a non-multitask model");
  }
  Tensor zy = z;
  if (y != nullptr) {
    if ((*y)->shape != std::vector<int>{z->shape[0], 2}) {
      throw DataError("decode: expected [batch,2] genre block, got " + shapeString(**y));
    }
    zy = g.concat({z, *y}, 1);
  }
  Tensor h = zy;
  for (const DenseLayer& layer : params.decoder.dense) {
    h = g.tanh(g.addRowBias(g.matmul(h, layer.w), layer.b));
  }
  Tensor state = g.tanh(g.addRowBias(g.matmul(h, params.decoder.h0.w), params.decoder.h0.b));
  std::vector<Tensor> frames;
  frames.reserve(static_cast<size_t>(config.frames));
  for (int t = 0; t < config.frames; ++t) {
    state = gruCell(g, zy, state, params.decoder.gru);
    frames.push_back(g.sigmoid(
        g.addRowBias(g.matmul(state, params.decoder.out.w), params.decoder.out.b)));
  }
  return g.concat(frames, 1);
}

Tensor classifierBatch(Graph& g, const ClassifierParams& params, const Tensor& x) {
  Tensor trunk = runStack(g, params.stack, params.config, x);
  return g.sigmoid(g.addRowBias(g.matmul(trunk, params.head.w), params.head.b));
}

LossParts elboLoss(Graph& g, const Tensor& x, const Tensor& probs, const LatentBatch& dist,
                   double beta) {
  LossParts parts;
  parts.recon = g.bceMean(probs, x);
  int batch = dist.mu->rows();
  int dz = dist.mu->cols();
  // 1/2 sum(mu^2 + exp(lv) - 1 - lv) over dims, mean over batch; the -1 terms
  // total batch * d_z and are folded in as a constant.
  Tensor cells = g.sub(g.add(g.mul(dist.mu, dist.mu), g.exp(dist.log_var)), dist.log_var);
  parts.lat = g.sub(g.scale(g.sum(cells), 0.5 / batch), scalarTensor(0.5 * dz));
  parts.total = g.add(parts.recon, g.scale(parts.lat, beta));
  return parts;
}

LossParts multitaskLoss(Graph& g, const Tensor& x, const Tensor& probs, const LatentBatch& dist,
                        const Tensor& yhat, const Tensor& y, double beta, double lambdaGenre) {
  LossParts parts = elboLoss(g, x, probs, dist, beta);
  if (y->shape != std::vector<int>{yhat->rows(), 2}) {
    throw DataError("multitask loss: expected [batch,2] genre block, got " + shapeString(*y));
  }
  Tensor jazz = g.slice(y, 1, 1, 1);
  parts.genre = g.bceMean(yhat, jazz);
  parts.total = g.add(parts.total, g.scale(parts.genre, lambdaGenre));
  return parts;
}

std::vector<Tensor> trainableParams(const ModelParams& params) {
  std::vector<Tensor> out;
  appendStack(out, params.encoder.stack);
  out.push_back(params.encoder.mu.w);
  out.push_back(params.encoder.mu.b);
  out.push_back(params.encoder.log_var.w);
  out.push_back(params.encoder.log_var.b);
  for (const DenseLayer& layer : params.decoder.dense) {
    out.push_back(layer.w);
    out.push_back(layer.b);
  }
  out.push_back(params.decoder.h0.w);
  out.push_back(params.decoder.h0.b);
  for (const Tensor& t : gruParamList(params.decoder.gru)) out.push_back(t);
  out.push_back(params.decoder.out.w);
  out.push_back(params.decoder.out.b);
  return out;
}

std::vector<Tensor> classifierParamList(const ClassifierParams& params) {
  std::vector<Tensor> out;
  appendStack(out, params.stack);
  out.push_back(params.head.w);
  out.push_back(params.head.b);
  return out;
}

std::vector<std::pair<std::string, Tensor>> namedParams(const ModelParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  nameStack(out, "enc", params.encoder.stack);
  nameDense(out, "enc.mu", params.encoder.mu);
  nameDense(out, "enc.log_var", params.encoder.log_var);
  for (size_t l = 0; l < params.decoder.dense.size(); ++l) {
    nameDense(out, "dec.dense" + std::to_string(l), params.decoder.dense[l]);
  }
  nameDense(out, "dec.h0", params.decoder.h0);
  nameGru(out, "dec.gru", params.decoder.gru);
  nameDense(out, "dec.out", params.decoder.out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> namedClassifierParams(
    const ClassifierParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  nameStack(out, "cls", params.stack);
  nameDense(out, "cls.head", params.head);
  return out;
}

Checkpoint modelCheckpoint(const ModelParams& params, const std::string& configJson) {
  Checkpoint ckpt;
  ckpt.config = configJson;
  ckpt.arrays = namedParams(params);
  // Detach the snapshot from the live (possibly still-training) parameters.
  for (auto& [name, tensor] : ckpt.arrays) tensor = makeTensor(tensor->shape, tensor->values);
  return ckpt;
}

ModelParams modelFromCheckpoint(const Checkpoint& ckpt) {
  ModelConfig config = modelConfigFromJson(ckpt.config);
  ModelParams params = buildModel(config, 0);
  fillFromArrays(namedParams(params), ckpt);
  return params;
}

Checkpoint classifierCheckpoint(const ClassifierParams& params, const std::string& configJson) {
  Checkpoint ckpt;
  ckpt.config = configJson;
  ckpt.arrays = namedClassifierParams(params);
  for (auto& [name, tensor] : ckpt.arrays) tensor = makeTensor(tensor->shape, tensor->values);
  return ckpt;
}

ClassifierParams classifierFromCheckpoint(const Checkpoint& ckpt) {
  ModelConfig config = modelConfigFromJson(ckpt.config);
  ClassifierParams params = buildClassifier(config, 0);
  fillFromArrays(namedClassifierParams(params), ckpt);
  return params;
}

Tensor genreBlock(const std::vector<Genre>& genres) {
  Tensor y = makeTensor({static_cast<int>(genres.size()), 2});
  for (size_t i = 0; i < genres.size(); ++i) {
    y->values[2 * i + (genres[i] == Genre::Jazz ? 1 : 0)] = 1.0;
  }
  return y;
}

}  // namespace melvae
