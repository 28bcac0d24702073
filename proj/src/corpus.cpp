#include "corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "errors.h"
#include "rng.h"
#include "json.hpp"

namespace melvae {

using json = nlohmann::ordered_json;

const char* genreName(Genre g) { return g == Genre::Jazz ? "jazz" : "other"; }
const char* splitName(Split s) { return s == Split::Train ? "train" : "test"; }

void validatePhrase(const NotePhrase& phrase) {
  int prevEnd = -1;
  int prevStart = -1;
  for (const NoteEvent& n : phrase.notes) {
    if (n.pitch < PITCH_MIN || n.pitch > PITCH_MAX) {
      throw DataError("phrase '" + phrase.id + "': pitch out of range [48,95]: " +
                      std::to_string(n.pitch));
    }
    if (n.duration < 1) {
      throw DataError("phrase '" + phrase.id + "': non-positive duration");
    }
    if (n.start < 0 || n.start + n.duration > STEPS_PER_PHRASE) {
      throw DataError("phrase '" + phrase.id + "': note exceeds the 64-step phrase (start " +
                      std::to_string(n.start) + ", duration " + std::to_string(n.duration) + ")");
    }
    if (n.start <= prevStart) {
      throw DataError("phrase '" + phrase.id + "': notes not strictly sorted by start");
    }
    if (n.start < prevEnd) {
      throw DataError("phrase '" + phrase.id + "': overlapping notes at step " +
                      std::to_string(n.start));
    }
    prevStart = n.start;
    prevEnd = n.start + n.duration;
  }
}

std::vector<size_t> Corpus::indicesOf(Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<NotePhrase> Corpus::phrasesOf(Split s) const {
  std::vector<NotePhrase> out;
  for (size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(phrases[i]);
  }
  return out;
}

void validateCorpus(const Corpus& corpus) {
  if (corpus.phrases.size() != corpus.splits.size()) {
    throw DataError("corpus: phrase/split count mismatch");
  }
  std::unordered_set<std::string> ids;
  for (const NotePhrase& p : corpus.phrases) {
    validatePhrase(p);
    if (!ids.insert(p.id).second) {
      throw DataError("corpus: duplicate phrase id '" + p.id + "'");
    }
  }
}

// --- serialization ---------------------------------------------------------

namespace {

void rejectUnknownKeys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw DataError(where + ": unknown field '" + key + "'");
    }
  }
}

NotePhrase phraseFromJson(const json& rec, const std::string& where) {
  rejectUnknownKeys(rec, {"id", "genre", "notes", "split"}, where);
  for (const char* field : {"id", "genre", "notes", "split"}) {
    if (!rec.contains(field)) throw DataError(where + ": missing field '" + std::string(field) + "'");
  }
  NotePhrase p;
  if (!rec["id"].is_string()) throw DataError(where + ": 'id' must be a string");
  p.id = rec["id"].get<std::string>();
  std::string genre = rec["genre"].is_string() ? rec["genre"].get<std::string>() : "";
  if (genre == "jazz") {
    p.genre = Genre::Jazz;
  } else if (genre == "other") {
    p.genre = Genre::Other;
  } else {
    throw DataError(where + ": genre must be \"jazz\" or \"other\"");
  }
  if (!rec["notes"].is_array()) throw DataError(where + ": 'notes' must be an array");
  for (const json& nj : rec["notes"]) {
    rejectUnknownKeys(nj, {"pitch", "start", "duration"}, where);
    for (const char* field : {"pitch", "start", "duration"}) {
      if (!nj.contains(field) || !nj[field].is_number_integer()) {
        throw DataError(where + ": note field '" + std::string(field) + "' missing or not an integer");
      }
    }
    p.notes.push_back({nj["pitch"].get<int>(), nj["start"].get<int>(), nj["duration"].get<int>()});
  }
  return p;
}

Split splitFromJson(const json& rec, const std::string& where) {
  std::string s = rec["split"].is_string() ? rec["split"].get<std::string>() : "";
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw DataError(where + ": split must be \"train\" or \"test\"");
}

}  // namespace

Corpus parseJsonlText(const std::string& text, const std::string& provenance) {
  Corpus corpus;
  corpus.provenance = provenance;
  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = provenance + ":" + std::to_string(lineNo);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed line: " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + ": record is not an object");
    NotePhrase p = phraseFromJson(rec, where);
    try {
      validatePhrase(p);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    corpus.phrases.push_back(std::move(p));
    corpus.splits.push_back(splitFromJson(rec, where));
  }
  validateCorpus(corpus);
  return corpus;
}

Corpus parseJsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parseJsonlText(buf.str(), path);
}

std::string toJsonlText(const Corpus& corpus) {
  std::ostringstream out;
  for (size_t i = 0; i < corpus.phrases.size(); ++i) {
    const NotePhrase& p = corpus.phrases[i];
    json rec;
    rec["id"] = p.id;
    rec["genre"] = genreName(p.genre);
    rec["notes"] = json::array();
    for (const NoteEvent& n : p.notes) {
      json nj;
      nj["pitch"] = n.pitch;
      nj["start"] = n.start;
      nj["duration"] = n.duration;
      rec["notes"].push_back(std::move(nj));
    }
    rec["split"] = splitName(corpus.splits[i]);
    out << rec.dump() << "\n";
  }
  return out.str();
}

void writeJsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << toJsonlText(corpus);
}

// --- pianoroll rendering ----------------------------------------------------

PianoRoll toPianoRoll(const NotePhrase& phrase) {
  PianoRoll roll;
  for (const NoteEvent& n : phrase.notes) {
    for (int s = n.start; s < n.start + n.duration; ++s) {
      roll.cells[static_cast<size_t>(s * PITCH_ROWS + (n.pitch - PITCH_MIN))] = 1;
    }
  }
  return roll;
}

NotePhrase fromPianoRoll(const PianoRoll& roll) {
  NotePhrase phrase;
  int runPitch = -1;
  int runStart = 0;
  auto flush = [&](int end) {
    if (runPitch >= 0) {
      phrase.notes.push_back({runPitch, runStart, end - runStart});
      runPitch = -1;
    }
  };
  for (int s = 0; s < STEPS_PER_PHRASE; ++s) {
    int active = -1;
    for (int r = 0; r < PITCH_ROWS; ++r) {
      if (roll.cells[static_cast<size_t>(s * PITCH_ROWS + r)]) {
        if (active >= 0) {
          throw DataError("pianoroll is polyphonic at step " + std::to_string(s));
        }
        active = PITCH_MIN + r;
      }
    }
    if (active != runPitch) {
      flush(s);
      if (active >= 0) {
        runPitch = active;
        runStart = s;
      }
    }
  }
  flush(STEPS_PER_PHRASE);
  return phrase;
}

PianoRoll binarizeMonophonic(std::span<const double> probs, double threshold) {
  if (probs.size() != static_cast<size_t>(ROLL_CELLS)) {
    throw DataError("binarize: expected 3072 probabilities, got " + std::to_string(probs.size()));
  }
  PianoRoll roll;
  for (int s = 0; s < STEPS_PER_PHRASE; ++s) {
    int best = -1;
    double bestProb = 0.0;
    for (int r = 0; r < PITCH_ROWS; ++r) {
      double p = probs[static_cast<size_t>(s * PITCH_ROWS + r)];
      if (p >= threshold && p > bestProb) {  // strict > keeps the lower pitch on ties
        best = r;
        bestProb = p;
      }
    }
    if (best >= 0) roll.cells[static_cast<size_t>(s * PITCH_ROWS + best)] = 1;
  }
  return roll;
}

// --- phrase manipulation ----------------------------------------------------

NotePhrase transposePhrase(const NotePhrase& phrase, int semitones) {
  NotePhrase out = phrase;
  std::string offenders;
  for (NoteEvent& n : out.notes) {
    int p = n.pitch + semitones;
    if (p < PITCH_MIN || p > PITCH_MAX) {
      if (!offenders.empty()) offenders += ", ";
      offenders += std::to_string(n.pitch) + "@" + std::to_string(n.start);
    }
    n.pitch = p;
  }
  if (!offenders.empty()) {
    throw DataError("transpose by " + std::to_string(semitones) +
                    " leaves range [48,95] for notes: " + offenders);
  }
  return out;
}

std::vector<NotePhrase> slicePhrases(const std::vector<NoteEvent>& events, SlicePolicy policy,
                                     const std::string& idPrefix, Genre genre,
                                     bool padFinalBars) {
  std::vector<NotePhrase> out;
  if (events.empty()) return out;
  long span = 0;
  for (const NoteEvent& e : events) span = std::max(span, static_cast<long>(e.start) + e.duration);
  if (padFinalBars) {
    span = (span + STEPS_PER_PHRASE - 1) / STEPS_PER_PHRASE * STEPS_PER_PHRASE;
  }
  int stride = policy == SlicePolicy::Sliding ? STEPS_PER_BAR : STEPS_PER_PHRASE;
  for (long w = 0; w + STEPS_PER_PHRASE <= span; w += stride) {
    NotePhrase phrase;
    phrase.genre = genre;
    phrase.id = idPrefix + "-w" + std::to_string(w);
    for (const NoteEvent& e : events) {
      long s = std::max(static_cast<long>(e.start), w);
      long end = std::min(static_cast<long>(e.start) + e.duration, w + STEPS_PER_PHRASE);
      if (s >= end) continue;
      phrase.notes.push_back({e.pitch, static_cast<int>(s - w), static_cast<int>(end - s)});
    }
    if (!phrase.notes.empty()) out.push_back(std::move(phrase));
  }
  return out;
}

// --- synthetic corpora ------------------------------------------------------

SynthProfile parseSynthProfile(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("synth profile: malformed JSON: ") + e.what());
  }
  rejectUnknownKeys(j,
                    {"name", "genre", "pitch_class_weights", "octave_weights", "duration_steps",
                     "duration_weights", "rest_prob", "train_fraction"},
                    "synth profile");
  SynthProfile p;
  if (j.contains("name")) p.name = j["name"].get<std::string>();
  if (j.contains("genre")) {
    std::string g = j["genre"].get<std::string>();
    if (g == "jazz") {
      p.genre = Genre::Jazz;
    } else if (g == "other") {
      p.genre = Genre::Other;
    } else {
      throw DataError("synth profile: genre must be \"jazz\" or \"other\"");
    }
  }
  if (j.contains("pitch_class_weights")) {
    auto v = j["pitch_class_weights"].get<std::vector<double>>();
    if (v.size() != 12) throw DataError("synth profile: pitch_class_weights needs 12 entries");
    std::copy(v.begin(), v.end(), p.pitch_class_weights.begin());
  }
  if (j.contains("octave_weights")) {
    auto v = j["octave_weights"].get<std::vector<double>>();
    if (v.size() != 4) throw DataError("synth profile: octave_weights needs 4 entries");
    std::copy(v.begin(), v.end(), p.octave_weights.begin());
  }
  if (j.contains("duration_steps")) p.duration_steps = j["duration_steps"].get<std::vector<int>>();
  if (j.contains("duration_weights")) {
    p.duration_weights = j["duration_weights"].get<std::vector<double>>();
  }
  if (p.duration_steps.size() != p.duration_weights.size() || p.duration_steps.empty()) {
    throw DataError("synth profile: duration_steps/duration_weights must be non-empty and aligned");
  }
  for (int d : p.duration_steps) {
    if (d < 1 || d > STEPS_PER_PHRASE) throw DataError("synth profile: duration out of [1,64]");
  }
  if (j.contains("rest_prob")) p.rest_prob = j["rest_prob"].get<double>();
  if (p.rest_prob < 0.0 || p.rest_prob >= 1.0) {
    throw DataError("synth profile: rest_prob must be in [0,1)");
  }
  if (j.contains("train_fraction")) p.train_fraction = j["train_fraction"].get<double>();
  if (p.train_fraction < 0.0 || p.train_fraction > 1.0) {
    throw DataError("synth profile: train_fraction must be in [0,1]");
  }
  double pcTotal = 0.0;
  for (double w : p.pitch_class_weights) {
    if (w < 0.0) throw DataError("synth profile: negative pitch-class weight");
    pcTotal += w;
  }
  if (pcTotal <= 0.0) throw DataError("synth profile: pitch-class weights sum to zero");
  return p;
}

SynthProfile loadSynthProfile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open synth profile: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parseSynthProfile(buf.str());
}

Corpus synthCorpus(const SynthProfile& profile, int count, uint64_t seed) {
  if (count < 1) throw DataError("synth: count >= 1 required");
  Rng rng(seed);
  std::vector<double> pcWeights(profile.pitch_class_weights.begin(),
                                profile.pitch_class_weights.end());
  std::vector<double> octWeights(profile.octave_weights.begin(), profile.octave_weights.end());
  Corpus corpus;
  corpus.provenance = "synth:" + profile.name + ":seed=" + std::to_string(seed);
  long nTrain = std::lround(profile.train_fraction * count);
  for (int i = 0; i < count; ++i) {
    NotePhrase phrase;
    phrase.genre = profile.genre;
    phrase.id = profile.name + "-" + std::to_string(seed) + "-" + std::to_string(i);
    int t = 0;
    while (t < STEPS_PER_PHRASE) {
      if (!phrase.notes.empty() && rng.uniform() < profile.rest_prob) {
        ++t;
        continue;
      }
      int dur = profile.duration_steps[rng.weighted(profile.duration_weights)];
      dur = std::min(dur, STEPS_PER_PHRASE - t);
      int pc = static_cast<int>(rng.weighted(pcWeights));
      int octave = static_cast<int>(rng.weighted(octWeights));
      phrase.notes.push_back({PITCH_MIN + octave * 12 + pc, t, dur});
      t += dur;
    }
    corpus.phrases.push_back(std::move(phrase));
    corpus.splits.push_back(i < nTrain ? Split::Train : Split::Test);
  }
  validateCorpus(corpus);
  return corpus;
}

Corpus sampleRatio(const Corpus& source, const Corpus& target, int ratio, uint64_t seed) {
  if (ratio < 1) throw DataError("sample_ratio: R >= 1 required");
  std::vector<size_t> srcTrain = source.indicesOf(Split::Train);
  size_t targetTrain = target.indicesOf(Split::Train).size();
  size_t want = targetTrain * static_cast<size_t>(ratio);
  if (srcTrain.size() < want) {
    throw DataError("sample_ratio: source has " + std::to_string(srcTrain.size()) +
                    " training phrases, needs " + std::to_string(want));
  }
  // Partial Fisher-Yates: choose `want` of the training indices, then restore
  // source order for a stable output.
  Rng rng(seed);
  for (size_t i = 0; i < want; ++i) {
    size_t j = i + static_cast<size_t>(rng.below(srcTrain.size() - i));
    std::swap(srcTrain[i], srcTrain[j]);
  }
  std::vector<size_t> chosen(srcTrain.begin(), srcTrain.begin() + static_cast<long>(want));
  std::sort(chosen.begin(), chosen.end());
  Corpus out;
  out.provenance = source.provenance + ":R=" + std::to_string(ratio);
  for (size_t idx : chosen) {
    out.phrases.push_back(source.phrases[idx]);
    out.splits.push_back(Split::Train);
  }
  return out;
}

void assignSplits(Corpus& corpus, double train_fraction, uint64_t seed) {
  if (train_fraction < 0.0 || train_fraction > 1.0) {
    throw DataError("assign_splits: train_fraction must be in [0,1]");
  }
  size_t n = corpus.size();
  long nTrain = std::lround(train_fraction * static_cast<double>(n));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  corpus.splits.assign(n, Split::Test);
  for (long i = 0; i < nTrain; ++i) corpus.splits[order[static_cast<size_t>(i)]] = Split::Train;
}

}  // namespace melvae
