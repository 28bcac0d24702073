#include <cmath>
#include <numeric>

#include "corpus.h"
#include "doctest.h"
#include "feature_oracle.h"
#include "melody_features.h"
#include "rng.h"
#include "test_util.h"

using namespace melvae;

namespace {

NotePhrase phraseOf(std::vector<NoteEvent> notes) {
  NotePhrase p;
  p.id = "t";
  p.notes = std::move(notes);
  validatePhrase(p);
  return p;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

template <size_t N>
double sum(const std::array<double, N>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST_CASE("length quantization picks the nearest class, shorter on ties") {
  CHECK(quantizeLength(4) == 2);    // 24 units: quarter, exact
  CHECK(quantizeLength(16) == 0);   // 96 units: full, exact
  CHECK(quantizeLength(5) == 9);    // 30 units: half-triplet at distance 2
  CHECK(quantizeLength(1) == 4);    // 6 units: 16th
  CHECK(quantizeLength(2) == 3);    // 12 units: 8th
  CHECK(quantizeLength(3) == 7);    // 18 units: dot-8th
  CHECK(quantizeLength(7) == 6);    // 42 units: tie 36 vs 48, shorter wins
  CHECK(quantizeLength(15) == 0);   // 90 units: full at distance 6
  CHECK(quantizeLength(64) == 0);   // 384 units: clamps to full
  CHECK(LENGTH_CLASSES[9].units == 32);
  for (int steps = 1; steps <= 64; ++steps) CHECK(quantizeLength(steps) == oracle::quantize(steps));
}

TEST_CASE("pitch count and range") {
  CHECK(pitchCount(phraseOf({{60, 0, 2}, {64, 2, 2}, {67, 4, 2}, {60, 6, 2}})) == 3);
  CHECK(pitchCount(phraseOf({})) == 0);
  std::vector<NoteEvent> chromatic;
  for (int i = 0; i < 48; ++i) chromatic.push_back({48 + i, i, 1});
  CHECK(pitchCount(phraseOf(chromatic)) == 48);
  CHECK(pitchRange(phraseOf(chromatic)) == 47);
  CHECK(pitchRange(phraseOf({{60, 0, 4}})) == 0);
  CHECK(pitchRange(phraseOf({})) == 0);
}

TEST_CASE("per-bar variants: coverage for PC, onsets for NC") {
  CHECK(pitchCountPerBar(phraseOf({{60, 0, 64}})) == 1.0);
  CHECK(pitchCountPerBar(phraseOf({{60, 0, 4}})) == 0.25);
  std::vector<NoteEvent> dense;
  for (int s = 0; s < 64; ++s) dense.push_back({48 + s % 16 + 16 * ((s / 16) % 2), s, 1});
  CHECK(pitchCountPerBar(phraseOf(dense)) == 16.0);
  // A note crossing the bar line counts in both bars it touches.
  CHECK(pitchCountPerBar(phraseOf({{60, 14, 4}})) == 0.5);

  CHECK(noteCountPerBar(phraseOf({{60, 0, 2}, {61, 16, 2}, {62, 32, 2}, {63, 48, 2}})) == 1.0);
  CHECK(noteCountPerBar(phraseOf({{60, 0, 2}, {61, 2, 2}, {62, 4, 2}, {63, 6, 2}})) == 1.0);
  CHECK(noteCountPerBar(phraseOf({})) == 0.0);
}

TEST_CASE("pitch class histogram and transitions") {
  auto hist = pitchClassHistogram(phraseOf({{60, 0, 2}, {48, 2, 2}, {72, 4, 2}}));
  CHECK(hist[0] == 3.0);
  CHECK(sum(hist) == 3.0);
  CHECK(sum(pitchClassHistogram(phraseOf({}))) == 0.0);

  auto m = pitchClassTransitionMatrix(phraseOf({{60, 0, 2}, {62, 2, 2}, {60, 4, 2}}));
  CHECK(m[0 * 12 + 2] == 1.0);
  CHECK(m[2 * 12 + 0] == 1.0);
  CHECK(sum(m) == 2.0);
  CHECK(sum(pitchClassTransitionMatrix(phraseOf({{60, 0, 2}}))) == 0.0);
  auto sep = pitchClassTransitionMatrix(phraseOf({{60, 0, 2}, {72, 8, 2}}));
  CHECK(sep[0] == 1.0);
}

TEST_CASE("note length histogram with and without rests") {
  auto quarter = noteLengthHistogram(phraseOf({{60, 0, 4}}), false);
  REQUIRE(quarter.size() == 12);
  CHECK(quarter[2] == 1.0);
  CHECK(sum(quarter) == 1.0);

  auto emptyRests = noteLengthHistogram(phraseOf({}), true);
  REQUIRE(emptyRests.size() == 24);
  CHECK(emptyRests[12] == 1.0);  // one 64-step silent run, clamped to full
  CHECK(sum(emptyRests) == 1.0);

  auto eighths = noteLengthHistogram(phraseOf({{60, 0, 2}, {62, 2, 2}}), false);
  CHECK(eighths[3] == 2.0);
}

TEST_CASE("note length transitions, rests interleaved") {
  auto m = noteLengthTransitionMatrix(phraseOf({{60, 0, 4}, {62, 4, 4}}), false);
  CHECK(m[2 * 12 + 2] == 1.0);
  CHECK(sum(m) == 1.0);
  CHECK(sum(noteLengthTransitionMatrix(phraseOf({{60, 0, 4}}), false)) == 0.0);

  // quarter note, quarter rest, quarter note.
  auto r = noteLengthTransitionMatrix(phraseOf({{60, 0, 4}, {62, 8, 4}}), true);
  REQUIRE(r.size() == 24 * 24);
  CHECK(r[2 * 24 + (12 + 2)] == 1.0);
  CHECK(r[(12 + 2) * 24 + 2] == 1.0);
}

TEST_CASE("structural invariants on random phrases") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    NotePhrase p = testutil::randomPhrase(rng, "f" + std::to_string(trial));
    FeatureVector f = extractFeatures(p, trial % 2 == 1);
    CHECK(f.pc <= 48);
    CHECK(f.pr <= 47);
    CHECK(sum(f.pch) == doctest::Approx(f.nc));
    CHECK(sum(f.pctm) == doctest::Approx(std::max(f.nc - 1, 0)));
    double noteBins = 0.0;
    for (int i = 0; i < 12; ++i) noteBins += f.nlh[static_cast<size_t>(i)];
    CHECK(noteBins == doctest::Approx(f.nc));
  }
}

TEST_CASE("transposition rotates PCH and fixes the rhythm features") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    NotePhrase p = testutil::randomPhrase(rng, "t" + std::to_string(trial));
    bool inRange = true;
    for (const NoteEvent& n : p.notes) inRange = inRange && n.pitch + 1 <= PITCH_MAX;
    if (!inRange) continue;
    NotePhrase up = transposePhrase(p, 1);
    FeatureVector a = extractFeatures(p, true);
    FeatureVector b = extractFeatures(up, true);
    CHECK(a.pc == b.pc);
    CHECK(a.nc == b.nc);
    CHECK(a.pr == b.pr);
    CHECK(a.pc_per_bar == b.pc_per_bar);
    CHECK(a.nc_per_bar == b.nc_per_bar);
    CHECK(a.nlh == b.nlh);
    CHECK(a.nltm == b.nltm);
    for (int k = 0; k < 12; ++k) {
      CHECK(a.pch[static_cast<size_t>(k)] == b.pch[static_cast<size_t>((k + 1) % 12)]);
    }
  }
}

TEST_CASE("time reversal transposes both transition matrices") {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    NotePhrase p = testutil::randomPhrase(rng, "r" + std::to_string(trial));
    NotePhrase rev = testutil::reversePhrase(p);
    validatePhrase(rev);
    FeatureVector a = extractFeatures(p, true);
    FeatureVector b = extractFeatures(rev, true);
    CHECK(a.pc == b.pc);
    CHECK(a.nc == b.nc);
    CHECK(a.pch == b.pch);
    CHECK(a.nlh == b.nlh);
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        CHECK(a.pctm[static_cast<size_t>(i * 12 + j)] == b.pctm[static_cast<size_t>(j * 12 + i)]);
      }
    }
    for (int i = 0; i < 24; ++i) {
      for (int j = 0; j < 24; ++j) {
        CHECK(a.nltm[static_cast<size_t>(i * 24 + j)] == b.nltm[static_cast<size_t>(j * 24 + i)]);
      }
    }
  }
}

TEST_CASE("production extractor matches the brute-force oracle") {
  Rng rng(34);
  for (int trial = 0; trial < 300; ++trial) {
    NotePhrase p = testutil::randomPhrase(rng, "o" + std::to_string(trial));
    bool rests = trial % 2 == 1;
    FeatureVector f = extractFeatures(p, rests);
    CHECK(f.pc == oracle::pc(p));
    CHECK(f.pr == oracle::pr(p));
    CHECK(f.nc == oracle::nc(p));
    CHECK(std::abs(f.pc_per_bar - oracle::pcPerBar(p)) <= 1e-12);
    CHECK(std::abs(f.nc_per_bar - oracle::ncPerBar(p)) <= 1e-12);
    CHECK(f.pch == oracle::pch(p));
    CHECK(f.pctm == oracle::pctm(p));
    CHECK(f.nlh == oracle::nlh(p, rests));
    CHECK(f.nltm == oracle::nltm(p, rests));
  }
}

TEST_CASE("extractAll matches per-phrase extraction") {
  SynthProfile profile;
  Corpus c = synthCorpus(profile, 20, 3);
  auto all = extractAll(c, false);
  REQUIRE(all.size() == 20);
  for (size_t i = 0; i < c.size(); ++i) {
    FeatureVector f = extractFeatures(c.phrases[i], false);
    CHECK(all[i].pc == f.pc);
    CHECK(all[i].pch == f.pch);
    CHECK(all[i].nlh == f.nlh);
  }
}
