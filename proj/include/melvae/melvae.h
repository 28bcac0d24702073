#ifndef MELVAE_MELVAE_H
#define MELVAE_MELVAE_H

/* C interface to the melody-VAE pipeline: corpora, training regimes,
 * generation, OA evaluation, figure reports and the gradient self-check.
 *
 * Every function that returns melvae_status leaves a diagnostic readable via
 * melvae_last_error() on failure; the message is thread-local and valid until
 * the next failing call on the same thread. Strings handed out through char**
 * parameters are heap-allocated and must be released with
 * melvae_string_free(). Handles are opaque and single-owner. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum melvae_status {
  MELVAE_OK = 0,
  MELVAE_USAGE = 1,   /* bad arguments to the call itself */
  MELVAE_DATA = 2,    /* malformed input, config or file contents */
  MELVAE_NUMERIC = 3, /* non-finite values or a failed numeric check */
} melvae_status;

typedef struct melvae_corpus melvae_corpus;
typedef struct melvae_model melvae_model;

const char* melvae_version(void);

/* Empty string when the last call on this thread succeeded. */
const char* melvae_last_error(void);

void melvae_string_free(char* text);

/* --- corpora -------------------------------------------------------------- */

melvae_status melvae_corpus_open_jsonl(const char* path, melvae_corpus** out);

/* genre: "jazz" or "other". sliding selects overlapped phrase windows.
 * dropped_out (optional) receives the number of notes outside the pitch
 * range. The corpus comes back entirely in the training split. */
melvae_status melvae_corpus_open_smf(const char* path, const char* genre, int track,
                                     int transpose, int sliding, melvae_corpus** out,
                                     int* dropped_out);

/* profile_path NULL selects the built-in default profile. */
melvae_status melvae_corpus_synth(const char* profile_path, int count, uint64_t seed,
                                  melvae_corpus** out);

melvae_status melvae_corpus_save(const melvae_corpus* corpus, const char* path);

/* Seeded random train/test assignment; fraction in [0, 1]. */
melvae_status melvae_corpus_assign_splits(melvae_corpus* corpus, double train_fraction,
                                          uint64_t seed);

int64_t melvae_corpus_phrases(const melvae_corpus* corpus);
int64_t melvae_corpus_bars(const melvae_corpus* corpus);

void melvae_corpus_free(melvae_corpus* corpus);

/* --- models --------------------------------------------------------------- */

melvae_status melvae_model_open(const char* checkpoint_path, melvae_model** out);

/* genre must be "jazz"/"other" for a multitask checkpoint and NULL otherwise. */
melvae_status melvae_model_generate(const melvae_model* model, int count, uint64_t seed,
                                    const char* genre, melvae_corpus** out);

void melvae_model_free(melvae_model* model);

/* --- pipeline drivers ------------------------------------------------------ */

/* config_json is the run-configuration document text (schema in the docs).
 * Runs one training run (the first requested R for the per-R regimes) and
 * writes its log and checkpoints. summary_out (optional) receives key=value
 * lines describing what was written. */
melvae_status melvae_train_run(const char* config_json, char** summary_out);

/* The full grid: per-R training, generation, OA tables, histograms, summary.
 * summary_out (optional) receives the summary table text. */
melvae_status melvae_experiment_run(const char* config_json, char** summary_out);

/* OA of generated against the target's training split; csv_out (optional)
 * receives the report table. */
melvae_status melvae_eval_oa(const char* target_jsonl, const char* generated_jsonl, int rests,
                             int grid_points, char** csv_out);

/* 48-bin pitch and 12-bin pitch-class histograms as CSV + SVG files named
 * <label>-*.{csv,svg} under out_dir. */
melvae_status melvae_report_histograms(const char* corpus_jsonl, const char* out_dir,
                                       const char* label, int normalize);

/* Finite-difference check of every backward rule and both objectives.
 * report_out (optional) receives the table; MELVAE_NUMERIC on failure. */
melvae_status melvae_gradcheck(char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* MELVAE_MELVAE_H */
