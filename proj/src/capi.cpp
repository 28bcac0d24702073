#include "melvae/melvae.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>

#include "corpus.h"
#include "errors.h"
#include "experiment.h"
#include "gradcheck.h"
#include "model.h"
#include "oa.h"
#include "report.h"
#include "smf.h"
#include "train.h"

struct melvae_corpus {
  melvae::Corpus value;
};

struct melvae_model {
  melvae::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

melvae_status fail(melvae_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs the body under the library's exception-to-status contract.
template <typename Fn>
melvae_status guardedCall(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MELVAE_OK;
  } catch (const melvae::DataError& e) {
    return fail(MELVAE_DATA, e.what());
  } catch (const melvae::NumericError& e) {
    return fail(MELVAE_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(MELVAE_DATA, e.what());
  }
}

char* duplicateString(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out != nullptr) std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

bool parseGenreName(const char* text, melvae::Genre& out) {
  if (text == nullptr) return false;
  if (std::strcmp(text, "jazz") == 0) {
    out = melvae::Genre::Jazz;
    return true;
  }
  if (std::strcmp(text, "other") == 0) {
    out = melvae::Genre::Other;
    return true;
  }
  return false;
}

melvae_status requireArg(bool present, const char* what) {
  return present ? MELVAE_OK : fail(MELVAE_USAGE, std::string(what) + " must not be null");
}

// The experiment driver measures OA against the training split; the
// standalone evaluator does the same so the two agree on identical inputs.
melvae::Corpus trainSplitOf(const melvae::Corpus& corpus) {
  melvae::Corpus out;
  out.provenance = corpus.provenance;
  out.phrases = corpus.phrasesOf(melvae::Split::Train);
  out.splits.assign(out.phrases.size(), melvae::Split::Train);
  return out;
}

}  // namespace

extern "C" {

const char* melvae_version(void) { return "0.1.0"; }

const char* melvae_last_error(void) { return g_last_error.c_str(); }

void melvae_string_free(char* text) { std::free(text); }

melvae_status melvae_corpus_open_jsonl(const char* path, melvae_corpus** out) {
  if (melvae_status s = requireArg(path != nullptr, "path"); s != MELVAE_OK) return s;
  if (melvae_status s = requireArg(out != nullptr, "out"); s != MELVAE_OK) return s;
  return guardedCall([&] { *out = new melvae_corpus{melvae::parseJsonl(path)}; });
}

melvae_status melvae_corpus_open_smf(const char* path, const char* genre, int track,
                                     int transpose, int sliding, melvae_corpus** out,
                                     int* dropped_out) {
  if (melvae_status s = requireArg(path != nullptr, "path"); s != MELVAE_OK) return s;
  if (melvae_status s = requireArg(out != nullptr, "out"); s != MELVAE_OK) return s;
  melvae::SmfOptions options;
  if (!parseGenreName(genre, options.genre)) {
    return fail(MELVAE_USAGE, "genre must be \"jazz\" or \"other\"");
  }
  options.track_index = track;
  options.transpose = transpose;
  options.policy = sliding != 0 ? melvae::SlicePolicy::Sliding : melvae::SlicePolicy::NonOverlapping;
  return guardedCall([&] {
    melvae::SmfResult result = melvae::parseSmf(path, options);
    if (dropped_out != nullptr) *dropped_out = result.dropped_notes;
    *out = new melvae_corpus{std::move(result.corpus)};
  });
}

melvae_status melvae_corpus_synth(const char* profile_path, int count, uint64_t seed,
                                  melvae_corpus** out) {
  if (melvae_status s = requireArg(out != nullptr, "out"); s != MELVAE_OK) return s;
  return guardedCall([&] {
    melvae::SynthProfile profile =
        profile_path != nullptr ? melvae::loadSynthProfile(profile_path) : melvae::SynthProfile{};
    *out = new melvae_corpus{melvae::synthCorpus(profile, count, seed)};
  });
}

melvae_status melvae_corpus_save(const melvae_corpus* corpus, const char* path) {
  if (melvae_status s = requireArg(corpus != nullptr, "corpus"); s != MELVAE_OK) return s;
  if (melvae_status s = requireArg(path != nullptr, "path"); s != MELVAE_OK) return s;
  return guardedCall([&] { melvae::writeJsonl(corpus->value, path); });
}

melvae_status melvae_corpus_assign_splits(melvae_corpus* corpus, double train_fraction,
                                          uint64_t seed) {
  if (melvae_status s = requireArg(corpus != nullptr, "corpus"); s != MELVAE_OK) return s;
  return guardedCall([&] { melvae::assignSplits(corpus->value, train_fraction, seed); });
}

int64_t melvae_corpus_phrases(const melvae_corpus* corpus) {
  return corpus == nullptr ? -1 : static_cast<int64_t>(corpus->value.size());
}

int64_t melvae_corpus_bars(const melvae_corpus* corpus) {
  return corpus == nullptr ? -1 : corpus->value.barCount();
}

void melvae_corpus_free(melvae_corpus* corpus) { delete corpus; }

melvae_status melvae_model_open(const char* checkpoint_path, melvae_model** out) {
  if (melvae_status s = requireArg(checkpoint_path != nullptr, "checkpoint_path"); s != MELVAE_OK)
    return s;
  if (melvae_status s = requireArg(out != nullptr, "out"); s != MELVAE_OK) return s;
  return guardedCall([&] {
    *out = new melvae_model{melvae::modelFromCheckpoint(melvae::loadCheckpoint(checkpoint_path))};
  });
}

melvae_status melvae_model_generate(const melvae_model* model, int count, uint64_t seed,
                                    const char* genre, melvae_corpus** out) {
  if (melvae_status s = requireArg(model != nullptr, "model"); s != MELVAE_OK) return s;
  if (melvae_status s = requireArg(out != nullptr, "out"); s != MELVAE_OK) return s;
  std::optional<melvae::Genre> parsed;
  if (genre != nullptr) {
    melvae::Genre g;
    if (!parseGenreName(genre, g)) {
      return fail(MELVAE_USAGE, "genre must be \"jazz\" or \"other\"");
    }
    parsed = g;
  }
  return guardedCall(
      [&] { *out = new melvae_corpus{melvae::generate(model->params, count, seed, parsed)}; });
}

void melvae_model_free(melvae_model* model) { delete model; }

melvae_status melvae_train_run(const char* config_json, char** summary_out) {
  if (melvae_status s = requireArg(config_json != nullptr, "config_json"); s != MELVAE_OK)
    return s;
  return guardedCall([&] {
    melvae::TrainingRunInfo info = melvae::runTraining(melvae::parseRunConfig(config_json));
    if (summary_out != nullptr) {
      char buf[64];
      std::string text = "label=" + info.label + "\ndirectory=" + info.directory + "\n";
      std::snprintf(buf, sizeof(buf), "final_recon=%.6f\n", info.final_recon);
      text += buf;
      if (info.classifier_accuracy >= 0.0) {
        std::snprintf(buf, sizeof(buf), "classifier_accuracy=%.4f\n", info.classifier_accuracy);
        text += buf;
      }
      *summary_out = duplicateString(text);
    }
  });
}

melvae_status melvae_experiment_run(const char* config_json, char** summary_out) {
  if (melvae_status s = requireArg(config_json != nullptr, "config_json"); s != MELVAE_OK)
    return s;
  return guardedCall([&] {
    melvae::ExperimentSummary summary =
        melvae::runExperiment(melvae::parseRunConfig(config_json));
    if (summary_out != nullptr) *summary_out = duplicateString(melvae::summaryTable(summary));
  });
}

melvae_status melvae_eval_oa(const char* target_jsonl, const char* generated_jsonl, int rests,
                             int grid_points, char** csv_out) {
  if (melvae_status s = requireArg(target_jsonl != nullptr, "target_jsonl"); s != MELVAE_OK)
    return s;
  if (melvae_status s = requireArg(generated_jsonl != nullptr, "generated_jsonl"); s != MELVAE_OK)
    return s;
  return guardedCall([&] {
    melvae::Corpus target = trainSplitOf(melvae::parseJsonl(target_jsonl));
    melvae::Corpus generated = melvae::parseJsonl(generated_jsonl);
    melvae::OaOptions options;
    options.rests = rests != 0;
    options.grid_points = grid_points;
    melvae::OaReport report = melvae::evaluateSets(target, generated, options);
    if (csv_out != nullptr) *csv_out = duplicateString(melvae::oaReportCsv(report));
  });
}

melvae_status melvae_report_histograms(const char* corpus_jsonl, const char* out_dir,
                                       const char* label, int normalize) {
  if (melvae_status s = requireArg(corpus_jsonl != nullptr, "corpus_jsonl"); s != MELVAE_OK)
    return s;
  if (melvae_status s = requireArg(out_dir != nullptr, "out_dir"); s != MELVAE_OK) return s;
  if (melvae_status s = requireArg(label != nullptr, "label"); s != MELVAE_OK) return s;
  return guardedCall([&] {
    melvae::writeHistogramReport(melvae::parseJsonl(corpus_jsonl), out_dir, label,
                                 normalize != 0);
  });
}

melvae_status melvae_gradcheck(char** report_out) {
  melvae::GradCheckReport report;
  melvae_status status = guardedCall([&] { report = melvae::runGradCheck(); });
  if (status != MELVAE_OK) return status;
  if (report_out != nullptr) *report_out = duplicateString(melvae::gradCheckText(report));
  if (!report.passed()) {
    const melvae::GradCheckCase& worst = report.worst();
    char buf[160];
    std::snprintf(buf, sizeof(buf), "gradient check failed: %s at %s (rel err %.3e)",
                  worst.name.c_str(), worst.worst_coordinate.c_str(), worst.max_rel_err);
    return fail(MELVAE_NUMERIC, buf);
  }
  g_last_error.clear();
  return MELVAE_OK;
}

}  // extern "C"
