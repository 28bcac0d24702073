// melvae command-line front end. Talks to the pipeline exclusively through
// the C API so it doubles as a smoke test of the shared library surface.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "melvae/melvae.h"

namespace {

// Exit-code contract: 0 ok, 1 usage, 2 data error, 3 numerical failure.
int finish(melvae_status status) {
  if (status != MELVAE_OK) std::fprintf(stderr, "error: %s\n", melvae_last_error());
  return static_cast<int>(status);
}

void printOwned(char* text) {
  if (text != nullptr) {
    std::fputs(text, stdout);
    melvae_string_free(text);
  }
}

bool readFile(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return true;
}

// Loads the config document and applies the scalar command-line overrides.
int loadConfig(const std::string& path, const std::string& outputOverride,
               std::optional<uint64_t> seedOverride, std::string& text) {
  if (!readFile(path, text)) {
    std::fprintf(stderr, "error: cannot open config %s\n", path.c_str());
    return static_cast<int>(MELVAE_DATA);
  }
  if (outputOverride.empty() && !seedOverride.has_value()) return 0;
  nlohmann::ordered_json doc = nlohmann::ordered_json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    std::fprintf(stderr, "error: config %s is not a JSON object\n", path.c_str());
    return static_cast<int>(MELVAE_DATA);
  }
  if (!outputOverride.empty()) doc["output"] = outputOverride;
  if (seedOverride.has_value()) doc["seed"] = *seedOverride;
  text = doc.dump();
  return 0;
}

int printCorpusSummary(melvae_corpus* corpus) {
  std::printf("%lld phrases, %lld bars\n", static_cast<long long>(melvae_corpus_phrases(corpus)),
              static_cast<long long>(melvae_corpus_bars(corpus)));
  return 0;
}

int saveAndSummarize(melvae_corpus* corpus, const std::string& outputPath) {
  melvae_status status = melvae_corpus_save(corpus, outputPath.c_str());
  if (status == MELVAE_OK) printCorpusSummary(corpus);
  melvae_corpus_free(corpus);
  return finish(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melody VAE transfer-learning pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(melvae_version()));

  // --- ingest --------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "validate a corpus file and convert it to jsonl");
  std::string ingestInput, ingestOutput, ingestFormat, ingestGenre = "other";
  int ingestTrack = 0, ingestTranspose = 0;
  bool ingestSliding = false;
  double ingestTrainFraction = -1.0;
  uint64_t ingestSeed = 0;
  ingest->add_option("-i,--input", ingestInput, "input file")->required();
  ingest->add_option("-f,--format", ingestFormat, "jsonl or smf")
      ->required()
      ->check(CLI::IsMember({"jsonl", "smf"}));
  ingest->add_option("-o,--output", ingestOutput, "output jsonl path")->required();
  ingest->add_option("--genre", ingestGenre, "genre tag for smf input (jazz|other)")
      ->check(CLI::IsMember({"jazz", "other"}));
  ingest->add_option("--track", ingestTrack, "smf track index");
  ingest->add_option("--transpose", ingestTranspose, "semitone shift applied on smf ingest");
  ingest->add_flag("--sliding", ingestSliding, "overlapping phrase windows on smf ingest");
  ingest->add_option("--train-fraction", ingestTrainFraction,
                     "reassign train/test splits after ingest")
      ->check(CLI::Range(0.0, 1.0));
  ingest->add_option("--seed", ingestSeed, "seed for the split assignment");

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synthProfile, synthOutput;
  int synthCount = 0;
  uint64_t synthSeed = 0;
  synth->add_option("--profile", synthProfile, "synth profile json (defaults built in)");
  synth->add_option("-n,--count", synthCount, "number of phrases")->required();
  synth->add_option("--seed", synthSeed, "generator seed");
  synth->add_option("-o,--output", synthOutput, "output jsonl path")->required();

  // --- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "run one training run from a config document");
  std::string trainConfig, trainOutput;
  std::optional<uint64_t> trainSeed;
  train->add_option("-c,--config", trainConfig, "run config json")->required();
  train->add_option("-o,--output", trainOutput, "override the config's output directory");
  train->add_option("--seed", trainSeed, "override the config's master seed");

  // --- generate ------------------------------------------------------------
  auto* generate = app.add_subcommand("generate", "sample phrases from a trained checkpoint");
  std::string generateModel, generateOutput, generateGenre;
  int generateCount = 0;
  uint64_t generateSeed = 0;
  generate->add_option("-m,--model", generateModel, "model checkpoint")->required();
  generate->add_option("-n,--count", generateCount, "number of phrases")->required();
  generate->add_option("--seed", generateSeed, "noise seed");
  generate->add_option("--genre", generateGenre, "conditioning label for multitask checkpoints")
      ->check(CLI::IsMember({"jazz", "other"}));
  generate->add_option("-o,--output", generateOutput, "output jsonl path")->required();

  // --- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "overlapping-area report of generated vs target");
  std::string evalTarget, evalGenerated, evalOutput;
  bool evalRests = false;
  int evalGridPoints = 1000;
  eval->add_option("-t,--target", evalTarget, "target corpus jsonl")->required();
  eval->add_option("-g,--generated", evalGenerated, "generated corpus jsonl")->required();
  eval->add_flag("--rests", evalRests, "include rest symbols in the length features");
  eval->add_option("--grid-points", evalGridPoints, "KDE grid resolution");
  eval->add_option("-o,--output", evalOutput, "write the CSV here instead of stdout");

  // --- experiment ----------------------------------------------------------
  auto* experiment =
      app.add_subcommand("experiment", "full per-R grid: train, generate, evaluate, report");
  std::string experimentConfig, experimentOutput;
  std::optional<uint64_t> experimentSeed;
  experiment->add_option("-c,--config", experimentConfig, "run config json")->required();
  experiment->add_option("-o,--output", experimentOutput, "override the config's output directory");
  experiment->add_option("--seed", experimentSeed, "override the config's master seed");

  // --- report --------------------------------------------------------------
  auto* report = app.add_subcommand("report", "pitch and pitch-class histograms (CSV + SVG)");
  std::string reportCorpus, reportOutput, reportLabel = "corpus";
  bool reportNormalize = false;
  report->add_option("-i,--corpus", reportCorpus, "corpus jsonl")->required();
  report->add_option("-o,--output", reportOutput, "output directory")->required();
  report->add_option("--label", reportLabel, "file-name prefix");
  report->add_flag("--normalize", reportNormalize, "emit relative frequencies");

  // --- gradcheck -----------------------------------------------------------
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Exit-code contract: every usage failure is 1 (CLI11's per-error codes
    // are collapsed); --help / --version stay 0.
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (ingest->parsed()) {
    melvae_corpus* corpus = nullptr;
    melvae_status status;
    if (ingestFormat == "jsonl") {
      status = melvae_corpus_open_jsonl(ingestInput.c_str(), &corpus);
    } else {
      int dropped = 0;
      status = melvae_corpus_open_smf(ingestInput.c_str(), ingestGenre.c_str(), ingestTrack,
                                      ingestTranspose, ingestSliding ? 1 : 0, &corpus, &dropped);
      if (status == MELVAE_OK && dropped > 0) {
        std::fprintf(stderr, "note: %d notes outside the pitch range were dropped\n", dropped);
      }
    }
    if (status != MELVAE_OK) return finish(status);
    if (ingestTrainFraction >= 0.0) {
      status = melvae_corpus_assign_splits(corpus, ingestTrainFraction, ingestSeed);
      if (status != MELVAE_OK) {
        melvae_corpus_free(corpus);
        return finish(status);
      }
    }
    return saveAndSummarize(corpus, ingestOutput);
  }

  if (synth->parsed()) {
    melvae_corpus* corpus = nullptr;
    melvae_status status = melvae_corpus_synth(
        synthProfile.empty() ? nullptr : synthProfile.c_str(), synthCount, synthSeed, &corpus);
    if (status != MELVAE_OK) return finish(status);
    return saveAndSummarize(corpus, synthOutput);
  }

  if (train->parsed()) {
    std::string config;
    if (int rc = loadConfig(trainConfig, trainOutput, trainSeed, config); rc != 0) return rc;
    char* summary = nullptr;
    melvae_status status = melvae_train_run(config.c_str(), &summary);
    if (status == MELVAE_OK) printOwned(summary);
    return finish(status);
  }

  if (generate->parsed()) {
    melvae_model* model = nullptr;
    melvae_status status = melvae_model_open(generateModel.c_str(), &model);
    if (status != MELVAE_OK) return finish(status);
    melvae_corpus* corpus = nullptr;
    status = melvae_model_generate(model, generateCount, generateSeed,
                                   generateGenre.empty() ? nullptr : generateGenre.c_str(),
                                   &corpus);
    melvae_model_free(model);
    if (status != MELVAE_OK) return finish(status);
    return saveAndSummarize(corpus, generateOutput);
  }

  if (eval->parsed()) {
    char* csv = nullptr;
    melvae_status status = melvae_eval_oa(evalTarget.c_str(), evalGenerated.c_str(),
                                          evalRests ? 1 : 0, evalGridPoints, &csv);
    if (status != MELVAE_OK) return finish(status);
    if (evalOutput.empty()) {
      printOwned(csv);
    } else {
      std::ofstream out(evalOutput, std::ios::binary);
      if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", evalOutput.c_str());
        melvae_string_free(csv);
        return static_cast<int>(MELVAE_DATA);
      }
      out << csv;
      melvae_string_free(csv);
    }
    return 0;
  }

  if (experiment->parsed()) {
    std::string config;
    if (int rc = loadConfig(experimentConfig, experimentOutput, experimentSeed, config); rc != 0) {
      return rc;
    }
    char* summary = nullptr;
    melvae_status status = melvae_experiment_run(config.c_str(), &summary);
    if (status == MELVAE_OK) printOwned(summary);
    return finish(status);
  }

  if (report->parsed()) {
    return finish(melvae_report_histograms(reportCorpus.c_str(), reportOutput.c_str(),
                                           reportLabel.c_str(), reportNormalize ? 1 : 0));
  }

  if (gradcheck->parsed()) {
    char* text = nullptr;
    melvae_status status = melvae_gradcheck(&text);
    printOwned(text);
    return finish(status);
  }

  return 1;
}
