#include "experiment.h"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "errors.h"
#include "oa.h"
#include "report.h"
#include "rng.h"

namespace melvae {
namespace {

using nlohmann::ordered_json;

void rejectUnknownKeys(const ordered_json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw DataError("run config: unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

int intField(const ordered_json& obj, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw DataError(std::string("run config: ") + key + " must be an integer");
  return v.get<int>();
}

double numberField(const ordered_json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw DataError(std::string("run config: ") + key + " must be a number");
  return v.get<double>();
}

bool boolField(const ordered_json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw DataError(std::string("run config: ") + key + " must be a boolean");
  return v.get<bool>();
}

std::string stringField(const ordered_json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw DataError(std::string("run config: ") + key + " must be a string");
  return v.get<std::string>();
}

// Sub-corpus holding one split only (re-marked Train so training code sees
// every phrase).
Corpus splitCorpus(const Corpus& corpus, Split split) {
  Corpus out;
  out.provenance = corpus.provenance;
  out.phrases = corpus.phrasesOf(split);
  out.splits.assign(out.phrases.size(), Split::Train);
  return out;
}

bool corpusHasNotes(const Corpus& corpus) {
  for (const NotePhrase& phrase : corpus.phrases) {
    if (!phrase.notes.empty()) return true;
  }
  return false;
}

std::string tableLabel(Regime regime, int ratio) {
  switch (regime) {
    case Regime::BaselineSource: return "Baseline 1 (source)";
    case Regime::BaselineTarget: return "Baseline 2 (target)";
    case Regime::FineTune: return "Method 1 (R=" + std::to_string(ratio) + ")";
    case Regime::Multitask: return "Method 2 (R=" + std::to_string(ratio) + ")";
  }
  return "?";
}

std::string formatCell(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

void writeTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

TrainConfig makeTrainConfig(const RunConfig& config, int ratio, uint64_t runSeed) {
  TrainConfig tc;
  tc.regime = config.regime;
  tc.ratio = ratio;
  tc.epochs = config.epochs;
  tc.stage2_epochs = config.stage2_epochs;
  tc.batch_size = config.batch_size;
  tc.lr = config.lr;
  tc.reset_moments = config.reset_moments;
  tc.kl_warmup = config.kl_warmup;
  tc.checkpoint_every = config.checkpoint_every;
  tc.seed = runSeed;
  tc.model = config.model;
  tc.model.frames = STEPS_PER_PHRASE;
  tc.model.multitask = config.regime == Regime::Multitask;
  return tc;
}

// One classifier serves every multitask R so the grid varies in R alone.
ClassifierResult trainAndSaveClassifier(const RunConfig& config, const Corpus& source,
                                        const Corpus& target) {
  TrainConfig cc;
  cc.regime = Regime::BaselineTarget;  // plain single-stage knob validation
  cc.epochs = config.classifier_epochs;
  cc.batch_size = config.batch_size;
  cc.lr = config.lr;
  cc.seed = deriveSeed(config.seed, "classifier", 0);
  cc.model = config.model;
  cc.model.frames = STEPS_PER_PHRASE;
  cc.model.multitask = false;
  ClassifierResult cls = trainClassifier(cc, source, target);
  writeTrainLog(cls.log, config.output_dir + "/classifier-train.csv");
  ordered_json header = ordered_json::parse(modelConfigJson(cc.model));
  header["role"] = "classifier";
  header["seed"] = cc.seed;
  header["accuracy"] = cls.accuracy;
  saveCheckpoint(classifierCheckpoint(cls.params, header.dump()),
                 config.output_dir + "/classifier.ckpt");
  return cls;
}

TrainResult trainOneRun(const RunConfig& config, int ratio, const Corpus& source,
                        const Corpus& target, const ClassifierParams& classifier,
                        const std::string& dir, uint64_t runSeed) {
  std::filesystem::create_directories(dir);
  TrainConfig tc = makeTrainConfig(config, ratio, runSeed);
  TrainResult result;
  switch (config.regime) {
    case Regime::BaselineSource: result = trainBaseline(tc, source); break;
    case Regime::BaselineTarget: result = trainBaseline(tc, target); break;
    case Regime::FineTune: result = trainFinetune(tc, source, target); break;
    case Regime::Multitask: result = trainMultitask(tc, source, target, classifier); break;
  }
  writeTrainLog(result.log, dir + "/train.csv");
  for (const auto& [name, ckpt] : result.checkpoints) {
    saveCheckpoint(ckpt, dir + "/" + name + ".ckpt");
  }
  return result;
}

}  // namespace

bool regimeUsesSource(Regime regime) {
  return regime != Regime::BaselineTarget;
}

Regime regimeFromName(const std::string& name) {
  for (Regime regime : {Regime::BaselineSource, Regime::BaselineTarget, Regime::FineTune,
                        Regime::Multitask}) {
    if (name == regimeName(regime)) return regime;
  }
  throw DataError("run config: unknown regime \"" + name + "\"");
}

uint64_t experimentRunSeed(uint64_t master, int ratio) {
  return deriveSeed(master, "ratio", static_cast<uint64_t>(ratio));
}

RunConfig parseRunConfig(const std::string& text) {
  ordered_json doc = ordered_json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw DataError("run config: not a JSON object");
  }
  rejectUnknownKeys(doc, {"regime", "ratios", "source", "target", "output", "seed", "model",
                          "train", "eval"},
                    "the top-level object");

  RunConfig config;
  if (doc.contains("regime")) {
    if (!doc.at("regime").is_string()) throw DataError("run config: regime must be a string");
    config.regime = regimeFromName(doc.at("regime").get<std::string>());
  }
  if (doc.contains("ratios")) {
    if (!doc.at("ratios").is_array() || doc.at("ratios").empty()) {
      throw DataError("run config: ratios must be a non-empty array");
    }
    config.ratios.clear();
    for (const auto& v : doc.at("ratios")) {
      if (!v.is_number_integer()) throw DataError("run config: ratios must hold integers");
      int r = v.get<int>();
      if (r < 1 || r > 6) {
        throw DataError("run config: ratio " + std::to_string(r) + " outside [1, 6]");
      }
      for (int seen : config.ratios) {
        if (seen == r) throw DataError("run config: duplicate ratio " + std::to_string(r));
      }
      config.ratios.push_back(r);
    }
  }
  config.source_path = stringField(doc, "source", "");
  config.target_path = stringField(doc, "target", "");
  config.output_dir = stringField(doc, "output", config.output_dir);
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer()) {
      throw DataError("run config: seed must be an integer");
    }
    config.seed = doc.at("seed").get<uint64_t>();
  }

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    if (!m.is_object()) throw DataError("run config: model must be an object");
    rejectUnknownKeys(m, {"hidden", "dense", "dense_layers", "latent", "beta", "lambda_genre"},
                      "the model block");
    config.model.hidden = intField(m, "hidden", config.model.hidden);
    config.model.dense = intField(m, "dense", config.model.dense);
    config.model.dense_layers = intField(m, "dense_layers", config.model.dense_layers);
    config.model.latent = intField(m, "latent", config.model.latent);
    config.model.beta = numberField(m, "beta", config.model.beta);
    config.model.lambda_genre = numberField(m, "lambda_genre", config.model.lambda_genre);
  }

  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    if (!t.is_object()) throw DataError("run config: train must be an object");
    rejectUnknownKeys(t, {"epochs", "stage2_epochs", "batch_size", "lr", "reset_moments",
                          "kl_warmup", "checkpoint_every", "classifier_epochs"},
                      "the train block");
    config.epochs = intField(t, "epochs", config.epochs);
    config.stage2_epochs = intField(t, "stage2_epochs", config.stage2_epochs);
    config.batch_size = intField(t, "batch_size", config.batch_size);
    config.lr = numberField(t, "lr", config.lr);
    config.reset_moments = boolField(t, "reset_moments", config.reset_moments);
    config.kl_warmup = boolField(t, "kl_warmup", config.kl_warmup);
    config.checkpoint_every = intField(t, "checkpoint_every", config.checkpoint_every);
    config.classifier_epochs = intField(t, "classifier_epochs", config.classifier_epochs);
  }

  if (doc.contains("eval")) {
    const auto& e = doc.at("eval");
    if (!e.is_object()) throw DataError("run config: eval must be an object");
    rejectUnknownKeys(e, {"rests", "grid_points", "generated", "normalize"}, "the eval block");
    config.rests = boolField(e, "rests", config.rests);
    config.grid_points = intField(e, "grid_points", config.grid_points);
    config.generated = intField(e, "generated", config.generated);
    config.normalize = boolField(e, "normalize", config.normalize);
  }

  if (config.target_path.empty()) throw DataError("run config: target corpus path is required");
  if (regimeUsesSource(config.regime) && config.source_path.empty()) {
    throw DataError(std::string("run config: source corpus path is required for the ") +
                    regimeName(config.regime) + " regime");
  }
  if (config.model.hidden < 1 || config.model.dense < 1 || config.model.dense_layers < 0 ||
      config.model.latent < 1) {
    throw DataError("run config: model dimensions must be positive");
  }
  if (config.classifier_epochs < 1) {
    throw DataError("run config: classifier_epochs must be positive");
  }
  if (config.grid_points < 2) throw DataError("run config: grid_points must be at least 2");
  if (config.generated < 0) throw DataError("run config: generated must be non-negative");

  // The per-R knobs are validated once here with a representative ratio so a
  // bad config fails before any corpus is loaded.
  TrainConfig probe = makeTrainConfig(config, regimeUsesSource(config.regime) &&
                                                  config.regime != Regime::BaselineSource
                                              ? config.ratios.front()
                                              : 0,
                                      config.seed);
  validateTrainConfig(probe);
  return config;
}

RunConfig loadRunConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open run config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parseRunConfig(text);
}

std::string runConfigJson(const RunConfig& config) {
  ordered_json doc;
  doc["regime"] = regimeName(config.regime);
  doc["ratios"] = config.ratios;
  if (!config.source_path.empty()) doc["source"] = config.source_path;
  doc["target"] = config.target_path;
  doc["output"] = config.output_dir;
  doc["seed"] = config.seed;
  doc["model"] = {{"hidden", config.model.hidden},
                  {"dense", config.model.dense},
                  {"dense_layers", config.model.dense_layers},
                  {"latent", config.model.latent},
                  {"beta", config.model.beta},
                  {"lambda_genre", config.model.lambda_genre}};
  doc["train"] = {{"epochs", config.epochs},
                  {"stage2_epochs", config.stage2_epochs},
                  {"batch_size", config.batch_size},
                  {"lr", config.lr},
                  {"reset_moments", config.reset_moments},
                  {"kl_warmup", config.kl_warmup},
                  {"checkpoint_every", config.checkpoint_every},
                  {"classifier_epochs", config.classifier_epochs}};
  doc["eval"] = {{"rests", config.rests},
                 {"grid_points", config.grid_points},
                 {"generated", config.generated},
                 {"normalize", config.normalize}};
  return doc.dump(2) + "\n";
}

ExperimentSummary runExperiment(const RunConfig& config) {
  namespace fs = std::filesystem;
  const bool usesSource = regimeUsesSource(config.regime);
  const bool perRatio = config.regime == Regime::FineTune || config.regime == Regime::Multitask;

  Corpus target = parseJsonl(config.target_path);
  Corpus source;
  if (usesSource) source = parseJsonl(config.source_path);

  // OA is always measured against the target's training split; the test split
  // stays reserved for the classifier's held-out accuracy.
  Corpus targetTrain = splitCorpus(target, Split::Train);
  if (targetTrain.size() < 2) {
    throw DataError("experiment: target train split has fewer than 2 phrases");
  }

  fs::create_directories(config.output_dir);
  writeTextFile(config.output_dir + "/config.json", runConfigJson(config));
  writeHistogramReport(targetTrain, config.output_dir, "target", config.normalize);

  ExperimentSummary summary;

  ClassifierParams classifier;
  if (config.regime == Regime::Multitask) {
    ClassifierResult cls = trainAndSaveClassifier(config, source, target);
    classifier = cls.params;
    summary.classifier_accuracy = cls.accuracy;
  }

  std::vector<int> ratios = perRatio ? config.ratios : std::vector<int>{0};
  std::vector<OaReport> reports;
  for (int ratio : ratios) {
    std::string label = perRatio ? "R" + std::to_string(ratio) : regimeName(config.regime);
    std::string dir = config.output_dir + "/" + label;
    uint64_t runSeed = experimentRunSeed(config.seed, ratio);
    TrainResult result = trainOneRun(config, ratio, source, target, classifier, dir, runSeed);

    int count = config.generated > 0 ? config.generated : static_cast<int>(targetTrain.size());
    std::optional<Genre> genre;
    if (config.regime == Regime::Multitask) genre = Genre::Jazz;
    Corpus generated = generate(result.params, count, deriveSeed(runSeed, "generate", 0), genre);
    writeJsonl(generated, dir + "/generated.jsonl");
    // A barely-trained model can emit all-rest phrases; the histogram figures
    // are meaningless then and are skipped, the OA table is not.
    if (corpusHasNotes(generated)) {
      writeHistogramReport(generated, dir, "generated", config.normalize);
    }

    OaOptions options;
    options.rests = config.rests;
    options.grid_points = config.grid_points;
    OaReport report = evaluateSets(targetTrain, generated, options);
    report.regime = regimeName(config.regime);
    report.ratio = ratio;
    report.seed = runSeed;
    writeOaReport(report, dir + "/oa.csv");
    reports.push_back(report);

    ExperimentRun run;
    run.label = label;
    run.table_label = tableLabel(config.regime, ratio);
    run.ratio = ratio;
    run.average_oa = report.average;
    summary.runs.push_back(run);
  }

  // grid.csv: feature rows x run columns, best column flagged per row.
  std::string grid = "feature";
  for (const ExperimentRun& run : summary.runs) grid += "," + run.label;
  grid += ",best\n";
  for (int f = 0; f <= NUM_FEATURES; ++f) {
    grid += f < NUM_FEATURES ? FEATURE_NAMES[static_cast<size_t>(f)] : "average";
    size_t best = 0;
    for (size_t i = 0; i < reports.size(); ++i) {
      double value = f < NUM_FEATURES ? reports[i].oa[static_cast<size_t>(f)] : reports[i].average;
      double incumbent =
          f < NUM_FEATURES ? reports[best].oa[static_cast<size_t>(f)] : reports[best].average;
      if (value > incumbent) best = i;
      grid += "," + formatCell(value);
    }
    grid += "," + summary.runs[best].label + "\n";
  }
  writeTextFile(config.output_dir + "/grid.csv", grid);

  writeTextFile(config.output_dir + "/summary.csv", summaryTable(summary));
  return summary;
}

std::string summaryTable(const ExperimentSummary& summary) {
  std::string table = "run,average_oa\n";
  for (const ExperimentRun& run : summary.runs) {
    table += run.table_label + "," + formatCell(run.average_oa) + "\n";
  }
  if (summary.classifier_accuracy >= 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "# classifier_accuracy=%.4f\n", summary.classifier_accuracy);
    table += buf;
  }
  return table;
}

TrainingRunInfo runTraining(const RunConfig& config) {
  const bool usesSource = regimeUsesSource(config.regime);
  const bool perRatio = config.regime == Regime::FineTune || config.regime == Regime::Multitask;

  Corpus target = parseJsonl(config.target_path);
  Corpus source;
  if (usesSource) source = parseJsonl(config.source_path);

  std::filesystem::create_directories(config.output_dir);
  writeTextFile(config.output_dir + "/config.json", runConfigJson(config));

  TrainingRunInfo info;
  ClassifierParams classifier;
  if (config.regime == Regime::Multitask) {
    ClassifierResult cls = trainAndSaveClassifier(config, source, target);
    classifier = cls.params;
    info.classifier_accuracy = cls.accuracy;
  }

  int ratio = perRatio ? config.ratios.front() : 0;
  info.label = perRatio ? "R" + std::to_string(ratio) : regimeName(config.regime);
  info.directory = config.output_dir + "/" + info.label;
  TrainResult result = trainOneRun(config, ratio, source, target, classifier, info.directory,
                                   experimentRunSeed(config.seed, ratio));
  info.final_recon = result.log.records.back().l_recon;
  return info;
}

}  // namespace melvae
