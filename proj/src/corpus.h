#ifndef MELVAE_CORPUS_H
#define MELVAE_CORPUS_H

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace melvae {

// Pitch grid: 48 rows covering C3..B6 under the C4=60 convention.
constexpr int PITCH_MIN = 48;
constexpr int PITCH_MAX = 95;
constexpr int PITCH_ROWS = 48;
constexpr int STEPS_PER_BAR = 16;
constexpr int BARS_PER_PHRASE = 4;
constexpr int STEPS_PER_PHRASE = BARS_PER_PHRASE * STEPS_PER_BAR;  // 64
constexpr int ROLL_CELLS = STEPS_PER_PHRASE * PITCH_ROWS;          // 3072

enum class Genre { Jazz, Other };
enum class Split { Train, Test };

const char* genreName(Genre g);
const char* splitName(Split s);

struct NoteEvent {
  int pitch = 0;     // MIDI note, [48, 95]
  int start = 0;     // time step, [0, 63]
  int duration = 1;  // steps, >= 1, start + duration <= 64

  bool operator==(const NoteEvent&) const = default;
};

struct NotePhrase {
  std::string id;
  Genre genre = Genre::Other;
  std::vector<NoteEvent> notes;  // strictly sorted by start, non-overlapping

  bool operator==(const NotePhrase&) const = default;
};

// Throws DataError naming the first violated invariant.
void validatePhrase(const NotePhrase& phrase);

// Binary 4x16x48 grid, stored flat as (global step, pitch row), row-major.
struct PianoRoll {
  std::array<uint8_t, ROLL_CELLS> cells{};

  uint8_t& at(int bar, int step, int pitchRow) {
    return cells[static_cast<size_t>((bar * STEPS_PER_BAR + step) * PITCH_ROWS + pitchRow)];
  }
  uint8_t at(int bar, int step, int pitchRow) const {
    return cells[static_cast<size_t>((bar * STEPS_PER_BAR + step) * PITCH_ROWS + pitchRow)];
  }

  bool operator==(const PianoRoll&) const = default;
};

struct Corpus {
  std::vector<NotePhrase> phrases;
  std::vector<Split> splits;  // aligned with phrases
  std::string provenance;

  size_t size() const { return phrases.size(); }
  int barCount() const { return static_cast<int>(phrases.size()) * BARS_PER_PHRASE; }
  std::vector<size_t> indicesOf(Split s) const;
  std::vector<NotePhrase> phrasesOf(Split s) const;
};

// Checks phrase invariants, id uniqueness and split alignment.
void validateCorpus(const Corpus& corpus);

// --- serialization ---------------------------------------------------------

// One JSON object per line: {"id","genre","notes","split"}; unknown fields
// rejected, diagnostics carry the 1-based line number.
Corpus parseJsonl(const std::string& path);
Corpus parseJsonlText(const std::string& text, const std::string& provenance);
void writeJsonl(const Corpus& corpus, const std::string& path);
std::string toJsonlText(const Corpus& corpus);

// --- pianoroll rendering ----------------------------------------------------

PianoRoll toPianoRoll(const NotePhrase& phrase);

// Inverse rendering: each maximal same-pitch run of active steps becomes one
// note. Throws DataError on a polyphonic grid.
NotePhrase fromPianoRoll(const PianoRoll& roll);

// Per time step: if any probability >= threshold, activate the argmax pitch
// (ties broken toward the lower pitch); otherwise rest.
PianoRoll binarizeMonophonic(std::span<const double> probs, double threshold = 0.5);

// --- phrase manipulation ----------------------------------------------------

NotePhrase transposePhrase(const NotePhrase& phrase, int semitones);

enum class SlicePolicy { NonOverlapping, Sliding };

// Cuts a quantized monophonic event stream into 64-step phrases. Windows with
// no notes are dropped; notes crossing a window edge are truncated at it.
// With padFinalBars the stream's span is rounded up to a whole number of
// phrases first, so a short tail still yields a (rest-padded) final phrase.
std::vector<NotePhrase> slicePhrases(const std::vector<NoteEvent>& events, SlicePolicy policy,
                                     const std::string& idPrefix, Genre genre,
                                     bool padFinalBars = false);

// --- synthetic corpora ------------------------------------------------------

struct SynthProfile {
  std::string name = "default";
  Genre genre = Genre::Other;
  std::array<double, 12> pitch_class_weights{1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1};  // C major
  std::array<double, 4> octave_weights{1, 2, 2, 1};
  std::vector<int> duration_steps{1, 2, 4, 8};
  std::vector<double> duration_weights{2, 3, 3, 1};
  double rest_prob = 0.2;      // chance of a 1-step gap before the next note
  double train_fraction = 0.9;
};

SynthProfile parseSynthProfile(const std::string& json);
SynthProfile loadSynthProfile(const std::string& path);

// Deterministic in (profile, count, seed). Throws DataError for count < 1.
Corpus synthCorpus(const SynthProfile& profile, int count, uint64_t seed);

// Uniform subsample of the source training split, size exactly
// ratio * |target train|, deterministic in seed. Output keeps source order.
Corpus sampleRatio(const Corpus& source, const Corpus& target, int ratio, uint64_t seed);

// Reassigns splits: a seeded uniform draw marks round(train_fraction * size)
// phrases Train and the rest Test. Phrase order is untouched.
void assignSplits(Corpus& corpus, double train_fraction, uint64_t seed);

}  // namespace melvae

#endif  // MELVAE_CORPUS_H
