#include "train.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>

#include "errors.h"
#include "json.hpp"

namespace melvae {

namespace {

// One flattened 64x48 roll per training row plus its task label.
struct Dataset {
  std::vector<std::vector<double>> rolls;
  std::vector<int> jazz;  // 1 = target task, 0 = source task
};

std::vector<double> rollValues(const NotePhrase& phrase) {
  PianoRoll roll = toPianoRoll(phrase);
  std::vector<double> values(ROLL_CELLS);
  for (size_t i = 0; i < ROLL_CELLS; ++i) values[i] = roll.cells[i];
  return values;
}

void appendCorpus(Dataset& data, const Corpus& corpus, int jazz) {
  for (const NotePhrase& phrase : corpus.phrasesOf(Split::Train)) {
    data.rolls.push_back(rollValues(phrase));
    data.jazz.push_back(jazz);
  }
}

Tensor gatherRows(const Dataset& data, const std::vector<size_t>& order, size_t begin,
                  size_t end) {
  Tensor x = makeTensor({static_cast<int>(end - begin), ROLL_CELLS});
  for (size_t r = begin; r < end; ++r) {
    const std::vector<double>& roll = data.rolls[order[r]];
    std::copy(roll.begin(), roll.end(), x->values.begin() + (r - begin) * ROLL_CELLS);
  }
  return x;
}

double warmedBeta(const TrainConfig& config, int globalEpoch) {
  if (!config.kl_warmup) return config.model.beta;
  return config.model.beta * std::min(1.0, globalEpoch / 10.0);
}

std::string checkpointHeader(const TrainConfig& config, int stage, int epoch) {
  auto j = nlohmann::ordered_json::parse(modelConfigJson(config.model));
  j["regime"] = regimeName(config.regime);
  j["ratio"] = config.ratio;
  j["seed"] = config.seed;
  j["stage"] = stage;
  j["epoch"] = epoch;
  return j.dump();
}

struct StageSpec {
  int stage;
  int epochs;
  int epoch_offset;  // global base for the shuffle / noise seed streams
  std::function<double(int)> lr_at;
};

// Shared mini-batch loop. A null classifier means the plain objective; with a
// classifier the genre term of the multitask objective is added and the
// decoder is conditioned on each row's task label.
void runStage(ModelParams& model, AdamOptimizer& opt, const Dataset& data,
              const ClassifierParams* classifier, const TrainConfig& config,
              const StageSpec& spec, TrainResult& result) {
  size_t n = data.rolls.size();
  for (int e = 0; e < spec.epochs; ++e) {
    auto started = std::chrono::steady_clock::now();
    int globalEpoch = spec.epoch_offset + e;
    double lr = spec.lr_at(e);
    double beta = warmedBeta(config, globalEpoch);
    Rng shuffleRng(deriveSeed(config.seed, "shuffle", static_cast<uint64_t>(globalEpoch)));
    Rng noiseRng(deriveSeed(config.seed, "noise", static_cast<uint64_t>(globalEpoch)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    shuffleRng.shuffle(order);

    long double recon = 0.0L, lat = 0.0L, genre = 0.0L;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(n, begin + static_cast<size_t>(config.batch_size));
      int rows = static_cast<int>(end - begin);
      Tensor x = gatherRows(data, order, begin, end);
      Tensor eps = makeTensor({rows, config.model.latent});
      for (double& v : eps->values) v = noiseRng.normal();

      opt.zeroGrad();
      Graph g;
      LatentBatch dist = encodeBatch(g, model, x);
      Tensor z = reparameterizeBatch(g, dist, eps);
      LossParts parts;
      if (classifier == nullptr) {
        Tensor probs = decodeBatch(g, model, z);
        parts = elboLoss(g, x, probs, dist, beta);
      } else {
        Tensor y = makeTensor({rows, 2});
        for (size_t r = begin; r < end; ++r) {
          y->values[2 * (r - begin) + static_cast<size_t>(data.jazz[order[r]])] = 1.0;
        }
        Tensor probs = decodeBatch(g, model, z, &y);
        Tensor yhat = classifierBatch(g, *classifier, probs);
        parts = multitaskLoss(g, x, probs, dist, yhat, y, beta, config.model.lambda_genre);
      }
      g.backward(parts.total);
      opt.clipGradients();
      opt.step(lr);

      recon += static_cast<long double>(parts.recon->values[0]) * rows;
      lat += static_cast<long double>(parts.lat->values[0]) * rows;
      if (parts.genre) genre += static_cast<long double>(parts.genre->values[0]) * rows;
    }

    TrainRecord record;
    record.epoch = e;
    record.stage = spec.stage;
    record.lr = lr;
    record.l_recon = static_cast<double>(recon / static_cast<long double>(n));
    record.l_lat = static_cast<double>(lat / static_cast<long double>(n));
    record.has_genre = classifier != nullptr;
    record.l_genre =
        record.has_genre ? static_cast<double>(genre / static_cast<long double>(n)) : 0.0;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                         .count();
    result.log.records.push_back(record);

    bool last = e + 1 == spec.epochs;
    if (config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0 && !last) {
      result.checkpoints.emplace_back(
          "stage" + std::to_string(spec.stage) + "-epoch" + std::to_string(e),
          modelCheckpoint(model, checkpointHeader(config, spec.stage, e)));
    }
  }
}

Dataset singleCorpusData(const Corpus& corpus) {
  Dataset data;
  appendCorpus(data, corpus, 1);
  if (data.rolls.empty()) throw DataError("empty corpus");
  return data;
}

void requireTrainable(const TrainConfig& config, bool multitask) {
  validateTrainConfig(config);
  if (config.model.multitask != multitask) {
    throw DataError(std::string("model multitask flag must be ") +
                    (multitask ? "on" : "off") + " for the " + regimeName(config.regime) +
                    " regime");
  }
  if (config.model.frames != STEPS_PER_PHRASE) {
    throw DataError("training requires 64-step phrases");
  }
}

}  // namespace

const char* regimeName(Regime regime) {
  switch (regime) {
    case Regime::BaselineSource: return "baseline-source";
    case Regime::BaselineTarget: return "baseline-target";
    case Regime::FineTune: return "fine-tune";
    case Regime::Multitask: return "multitask";
  }
  return "?";
}

void validateTrainConfig(const TrainConfig& config) {
  bool usesSource = config.regime == Regime::FineTune || config.regime == Regime::Multitask;
  if (usesSource && (config.ratio < 1 || config.ratio > 6)) {
    throw DataError("ratio R must be in [1,6] for the " + std::string(regimeName(config.regime)) +
                    " regime");
  }
  if (config.epochs < 1) throw DataError("epochs must be positive");
  if (config.regime == Regime::FineTune && config.stage2_epochs < 1) {
    throw DataError("stage2_epochs must be positive");
  }
  if (config.batch_size < 1) throw DataError("batch_size must be positive");
  if (config.lr <= 0.0) throw DataError("learning rate must be positive");
  if (config.checkpoint_every < 0) throw DataError("checkpoint_every must be nonnegative");
}

std::string trainLogCsv(const TrainLog& log) {
  std::string out = "epoch,stage,lr,l_recon,l_lat,l_genre,seconds\n";
  char buf[160];
  for (const TrainRecord& r : log.records) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.6f,%.6f,", r.epoch, r.stage, r.lr, r.l_recon,
                  r.l_lat);
    out += buf;
    if (r.has_genre) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.l_genre);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.3f\n", r.seconds);
    out += buf;
  }
  return out;
}

void writeTrainLog(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write train log: " + path);
  out << trainLogCsv(log);
}

double finetuneLearningRate(int t) {
  if (t < 40) return 1e-5;
  if (t < 80) return 1e-7;
  return 1e-9;
}

TrainResult trainBaseline(const TrainConfig& config, const Corpus& corpus) {
  requireTrainable(config, false);
  if (config.regime != Regime::BaselineSource && config.regime != Regime::BaselineTarget) {
    throw DataError("trainBaseline expects a baseline regime");
  }
  Dataset data = singleCorpusData(corpus);
  TrainResult result;
  result.params = buildModel(config.model, deriveSeed(config.seed, "init", 0));
  AdamOptimizer opt(trainableParams(result.params));
  StageSpec spec{1, config.epochs, 0, [&](int) { return config.lr; }};
  runStage(result.params, opt, data, nullptr, config, spec, result);
  result.checkpoints.emplace_back(
      "final", modelCheckpoint(result.params, checkpointHeader(config, 1, config.epochs - 1)));
  return result;
}

TrainResult trainFinetune(const TrainConfig& config, const Corpus& source, const Corpus& target) {
  requireTrainable(config, false);
  if (config.regime != Regime::FineTune) throw DataError("trainFinetune expects fine-tune");
  Corpus sampled = sampleRatio(source, target, config.ratio, deriveSeed(config.seed, "sample", 0));
  Dataset stage1 = singleCorpusData(sampled);
  Dataset stage2 = singleCorpusData(target);

  TrainResult result;
  result.params = buildModel(config.model, deriveSeed(config.seed, "init", 0));
  AdamOptimizer opt(trainableParams(result.params));
  StageSpec pre{1, config.epochs, 0, [&](int) { return config.lr; }};
  runStage(result.params, opt, stage1, nullptr, config, pre, result);
  result.checkpoints.emplace_back(
      "stage1", modelCheckpoint(result.params, checkpointHeader(config, 1, config.epochs - 1)));

  if (config.reset_moments) opt.resetMoments();
  StageSpec fine{2, config.stage2_epochs, config.epochs,
                 [](int t) { return finetuneLearningRate(t); }};
  runStage(result.params, opt, stage2, nullptr, config, fine, result);
  result.checkpoints.emplace_back(
      "final",
      modelCheckpoint(result.params, checkpointHeader(config, 2, config.stage2_epochs - 1)));
  return result;
}

TrainResult trainMultitask(const TrainConfig& config, const Corpus& source, const Corpus& target,
                           const ClassifierParams& classifier) {
  requireTrainable(config, true);
  if (config.regime != Regime::Multitask) throw DataError("trainMultitask expects multitask");
  Corpus sampled = sampleRatio(source, target, config.ratio, deriveSeed(config.seed, "sample", 0));
  Dataset data;
  appendCorpus(data, sampled, 0);
  appendCorpus(data, target, 1);
  if (data.rolls.empty()) throw DataError("empty corpus");

  TrainResult result;
  result.params = buildModel(config.model, deriveSeed(config.seed, "init", 0));
  AdamOptimizer opt(trainableParams(result.params));
  StageSpec spec{1, config.epochs, 0, [&](int) { return config.lr; }};
  runStage(result.params, opt, data, &classifier, config, spec, result);
  result.checkpoints.emplace_back(
      "final", modelCheckpoint(result.params, checkpointHeader(config, 1, config.epochs - 1)));
  return result;
}

ClassifierResult trainClassifier(const TrainConfig& config, const Corpus& source,
                                 const Corpus& target) {
  validateTrainConfig(config);
  if (config.model.frames != STEPS_PER_PHRASE) {
    throw DataError("training requires 64-step phrases");
  }
  Dataset data;
  appendCorpus(data, source, 0);
  appendCorpus(data, target, 1);
  if (data.rolls.empty()) throw DataError("empty corpus");

  ClassifierResult result;
  result.params = buildClassifier(config.model, deriveSeed(config.seed, "cls-init", 0));
  AdamOptimizer opt(classifierParamList(result.params));
  size_t n = data.rolls.size();
  for (int e = 0; e < config.epochs; ++e) {
    auto started = std::chrono::steady_clock::now();
    Rng shuffleRng(deriveSeed(config.seed, "cls-shuffle", static_cast<uint64_t>(e)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    shuffleRng.shuffle(order);
    long double total = 0.0L;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(n, begin + static_cast<size_t>(config.batch_size));
      int rows = static_cast<int>(end - begin);
      Tensor x = gatherRows(data, order, begin, end);
      Tensor labels = makeTensor({rows, 1});
      for (size_t r = begin; r < end; ++r) labels->values[r - begin] = data.jazz[order[r]];
      opt.zeroGrad();
      Graph g;
      Tensor loss = g.bceMean(classifierBatch(g, result.params, x), labels);
      g.backward(loss);
      opt.clipGradients();
      opt.step(config.lr);
      total += static_cast<long double>(loss->values[0]) * rows;
    }
    TrainRecord record;
    record.epoch = e;
    record.stage = 1;
    record.lr = config.lr;
    record.l_recon = 0.0;
    record.l_lat = 0.0;
    record.l_genre = static_cast<double>(total / static_cast<long double>(n));
    record.has_genre = true;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                         .count();
    result.log.records.push_back(record);
  }

  // Held-out accuracy; falls back to the training rows when neither corpus
  // carries a test split.
  Dataset held;
  for (const Corpus* c : {&source, &target}) {
    int jazz = c == &target ? 1 : 0;
    for (const NotePhrase& phrase : c->phrasesOf(Split::Test)) {
      held.rolls.push_back(rollValues(phrase));
      held.jazz.push_back(jazz);
    }
  }
  const Dataset& evalData = held.rolls.empty() ? data : held;
  size_t correct = 0;
  std::vector<size_t> order(evalData.rolls.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t begin = 0; begin < order.size(); begin += 128) {
    size_t end = std::min(order.size(), begin + 128);
    Tensor x = gatherRows(evalData, order, begin, end);
    Graph g;
    Tensor yhat = classifierBatch(g, result.params, x);
    for (size_t r = begin; r < end; ++r) {
      int predicted = yhat->values[r - begin] >= 0.5 ? 1 : 0;
      if (predicted == evalData.jazz[r]) ++correct;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(evalData.rolls.size());
  return result;
}

Corpus generate(const ModelParams& params, int count, uint64_t seed,
                std::optional<Genre> genre) {
  if (count < 1) throw DataError("generate: count must be positive");
  if (params.config.frames != STEPS_PER_PHRASE) {
    throw DataError("generate: model does not produce 64-step phrases");
  }
  if (params.config.multitask && !genre.has_value()) {
    throw DataError("generate: genre required for a multitask model");
  }
  if (!params.config.multitask && genre.has_value()) {
    throw DataError("generate: genre supplied to a non-multitask model");
  }
  Corpus out;
  out.provenance = "generated";
  Rng noise(deriveSeed(seed, "noise", 0));
  int done = 0;
  while (done < count) {
    int rows = std::min(128, count - done);
    Tensor z = makeTensor({rows, params.config.latent});
    for (double& v : z->values) v = noise.normal();
    Graph g;
    Tensor probs;
    if (genre.has_value()) {
      Tensor y = genreBlock(std::vector<Genre>(static_cast<size_t>(rows), *genre));
      probs = decodeBatch(g, params, z, &y);
    } else {
      probs = decodeBatch(g, params, z);
    }
    for (int r = 0; r < rows; ++r) {
      std::span<const double> row(probs->values.data() + static_cast<size_t>(r) * ROLL_CELLS,
                                  ROLL_CELLS);
      NotePhrase phrase = fromPianoRoll(binarizeMonophonic(row));
      phrase.id = "gen-" + std::to_string(seed) + "-" + std::to_string(done + r);
      phrase.genre = genre.value_or(Genre::Other);
      out.phrases.push_back(std::move(phrase));
      out.splits.push_back(Split::Train);
    }
    done += rows;
  }
  return out;
}

}  // namespace melvae
