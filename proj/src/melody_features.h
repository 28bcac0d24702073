#ifndef MELVAE_MELODY_FEATURES_H
#define MELVAE_MELODY_FEATURES_H

#include <array>
#include <string>
#include <vector>

#include "corpus.h"

namespace melvae {

// Note-length classes on the 96-units-per-bar grid (one 16th step = 6 units).
struct LengthClass {
  const char* name;
  int units;
};

inline constexpr std::array<LengthClass, 12> LENGTH_CLASSES{{{"full", 96},
                                                            {"half", 48},
                                                            {"quarter", 24},
                                                            {"8th", 12},
                                                            {"16th", 6},
                                                            {"dot-half", 72},
                                                            {"dot-quarter", 36},
                                                            {"dot-8th", 18},
                                                            {"dot-16th", 9},
                                                            {"half-triplet", 32},
                                                            {"quarter-triplet", 16},
                                                            {"8th-triplet", 8}}};

constexpr int UNITS_PER_STEP = 6;
constexpr int NUM_LENGTH_CLASSES = 12;

// Nearest class by unit length (duration_steps * 6); ties break toward the
// shorter class. Durations past a full bar land on "full", the longest class.
int quantizeLength(int durationSteps);

// Per-phrase pitch- and rhythm-content metrics. Histograms hold raw counts;
// normalization is a report-time option only.
struct FeatureVector {
  int pc = 0;               // distinct pitches
  double pc_per_bar = 0.0;  // mean distinct pitches sounding per bar
  int pr = 0;               // pitch range in semitones
  std::array<double, 12> pch{};    // pitch-class counts
  std::array<double, 144> pctm{};  // pitch-class transitions, row-major
  int nc = 0;               // note count
  double nc_per_bar = 0.0;  // mean onsets per bar
  std::vector<double> nlh;   // 12 bins, or 24 with the rest option
  std::vector<double> nltm;  // 12x12 or 24x24, row-major
};

int pitchCount(const NotePhrase& phrase);
double pitchCountPerBar(const NotePhrase& phrase);
int pitchRange(const NotePhrase& phrase);
std::array<double, 12> pitchClassHistogram(const NotePhrase& phrase);
std::array<double, 144> pitchClassTransitionMatrix(const NotePhrase& phrase);
int noteCount(const NotePhrase& phrase);
double noteCountPerBar(const NotePhrase& phrase);
std::vector<double> noteLengthHistogram(const NotePhrase& phrase, bool rests);
std::vector<double> noteLengthTransitionMatrix(const NotePhrase& phrase, bool rests);

FeatureVector extractFeatures(const NotePhrase& phrase, bool rests = false);
std::vector<FeatureVector> extractAll(const Corpus& corpus, bool rests = false);

}  // namespace melvae

#endif  // MELVAE_MELODY_FEATURES_H
