#include "melody_features.h"

#include <algorithm>
#include <cstdlib>
#include <set>

namespace melvae {

int quantizeLength(int durationSteps) {
  int units = durationSteps * UNITS_PER_STEP;
  int best = 0;
  int bestDist = std::abs(units - LENGTH_CLASSES[0].units);
  for (int i = 1; i < NUM_LENGTH_CLASSES; ++i) {
    int dist = std::abs(units - LENGTH_CLASSES[static_cast<size_t>(i)].units);
    int unitsI = LENGTH_CLASSES[static_cast<size_t>(i)].units;
    if (dist < bestDist ||
        (dist == bestDist && unitsI < LENGTH_CLASSES[static_cast<size_t>(best)].units)) {
      best = i;
      bestDist = dist;
    }
  }
  return best;
}

int pitchCount(const NotePhrase& phrase) {
  std::set<int> pitches;
  for (const NoteEvent& n : phrase.notes) pitches.insert(n.pitch);
  return static_cast<int>(pitches.size());
}

double pitchCountPerBar(const NotePhrase& phrase) {
  // A note counts in every bar it sounds in, not just its onset bar.
  double total = 0.0;
  for (int bar = 0; bar < BARS_PER_PHRASE; ++bar) {
    int barStart = bar * STEPS_PER_BAR;
    int barEnd = barStart + STEPS_PER_BAR;
    std::set<int> pitches;
    for (const NoteEvent& n : phrase.notes) {
      if (n.start < barEnd && n.start + n.duration > barStart) pitches.insert(n.pitch);
    }
    total += static_cast<double>(pitches.size());
  }
  return total / BARS_PER_PHRASE;
}

int pitchRange(const NotePhrase& phrase) {
  if (phrase.notes.empty()) return 0;
  int lo = PITCH_MAX + 1, hi = PITCH_MIN - 1;
  for (const NoteEvent& n : phrase.notes) {
    lo = std::min(lo, n.pitch);
    hi = std::max(hi, n.pitch);
  }
  return hi - lo;
}

std::array<double, 12> pitchClassHistogram(const NotePhrase& phrase) {
  std::array<double, 12> hist{};
  for (const NoteEvent& n : phrase.notes) hist[static_cast<size_t>(n.pitch % 12)] += 1.0;
  return hist;
}

std::array<double, 144> pitchClassTransitionMatrix(const NotePhrase& phrase) {
  std::array<double, 144> matrix{};
  for (size_t i = 1; i < phrase.notes.size(); ++i) {
    int from = phrase.notes[i - 1].pitch % 12;
    int to = phrase.notes[i].pitch % 12;
    matrix[static_cast<size_t>(from * 12 + to)] += 1.0;
  }
  return matrix;
}

int noteCount(const NotePhrase& phrase) { return static_cast<int>(phrase.notes.size()); }

double noteCountPerBar(const NotePhrase& phrase) {
  // Onset-based: each note belongs to the bar containing its start step.
  return static_cast<double>(phrase.notes.size()) / BARS_PER_PHRASE;
}

namespace {

// Chronological rhythm events: length class per note, and per maximal silent
// run when the rest option is on (rest classes live at indices 12..23).
std::vector<int> rhythmEvents(const NotePhrase& phrase, bool rests) {
  std::vector<int> events;
  int cursor = 0;
  for (const NoteEvent& n : phrase.notes) {
    if (rests && n.start > cursor) {
      events.push_back(NUM_LENGTH_CLASSES + quantizeLength(n.start - cursor));
    }
    events.push_back(quantizeLength(n.duration));
    cursor = n.start + n.duration;
  }
  if (rests && cursor < STEPS_PER_PHRASE) {
    events.push_back(NUM_LENGTH_CLASSES + quantizeLength(STEPS_PER_PHRASE - cursor));
  }
  return events;
}

}  // namespace

std::vector<double> noteLengthHistogram(const NotePhrase& phrase, bool rests) {
  std::vector<double> hist(static_cast<size_t>(rests ? 24 : 12), 0.0);
  for (int e : rhythmEvents(phrase, rests)) hist[static_cast<size_t>(e)] += 1.0;
  return hist;
}

std::vector<double> noteLengthTransitionMatrix(const NotePhrase& phrase, bool rests) {
  int dim = rests ? 24 : 12;
  std::vector<double> matrix(static_cast<size_t>(dim * dim), 0.0);
  std::vector<int> events = rhythmEvents(phrase, rests);
  for (size_t i = 1; i < events.size(); ++i) {
    matrix[static_cast<size_t>(events[i - 1] * dim + events[i])] += 1.0;
  }
  return matrix;
}

FeatureVector extractFeatures(const NotePhrase& phrase, bool rests) {
  FeatureVector f;
  f.pc = pitchCount(phrase);
  f.pc_per_bar = pitchCountPerBar(phrase);
  f.pr = pitchRange(phrase);
  f.pch = pitchClassHistogram(phrase);
  f.pctm = pitchClassTransitionMatrix(phrase);
  f.nc = noteCount(phrase);
  f.nc_per_bar = noteCountPerBar(phrase);
  f.nlh = noteLengthHistogram(phrase, rests);
  f.nltm = noteLengthTransitionMatrix(phrase, rests);
  return f;
}

std::vector<FeatureVector> extractAll(const Corpus& corpus, bool rests) {
  std::vector<FeatureVector> out;
  out.reserve(corpus.size());
  for (const NotePhrase& p : corpus.phrases) out.push_back(extractFeatures(p, rests));
  return out;
}

}  // namespace melvae
