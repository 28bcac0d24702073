#include "smf.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "errors.h"

namespace melvae {

namespace {

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  size_t pos() const { return pos_; }
  bool done() const { return pos_ >= size_; }

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint8_t peek() const {
    if (pos_ >= size_) throw DataError("SMF: unexpected end of file");
    return data_[pos_];
  }
  uint16_t u16be() {
    need(2);
    uint16_t v = static_cast<uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  uint32_t u32be() {
    need(4);
    uint32_t v = (static_cast<uint32_t>(data_[pos_]) << 24) |
                 (static_cast<uint32_t>(data_[pos_ + 1]) << 16) |
                 (static_cast<uint32_t>(data_[pos_ + 2]) << 8) | data_[pos_ + 3];
    pos_ += 4;
    return v;
  }
  uint32_t varint() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      uint8_t b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw DataError("SMF: variable-length quantity longer than 4 bytes");
  }
  void skip(size_t n) {
    need(n);
    pos_ += n;
  }
  void need(size_t n) const {
    if (pos_ + n > size_) throw DataError("SMF: unexpected end of file");
  }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

struct RawNote {
  long on_tick;
  long off_tick;
  int pitch;
};

struct TimeSig {
  long tick;
  int numerator;
  int denominator;
};

// Walks one MTrk chunk. Notes are recorded only when collectNotes is set;
// time signatures are always recorded (format-1 files keep them on track 0).
void walkTrack(ByteReader& r, size_t length, bool collectNotes, std::vector<RawNote>& notes,
               std::vector<TimeSig>& sigs, bool& sawNoteEvent) {
  size_t end = r.pos() + length;
  long tick = 0;
  uint8_t status = 0;
  // Pending note-on tick per pitch; -1 when the pitch is not sounding.
  long pending[128];
  std::fill(pending, pending + 128, -1L);
  auto closeNote = [&](int pitch, long offTick) {
    if (pending[pitch] >= 0) {
      notes.push_back({pending[pitch], offTick, pitch});
      pending[pitch] = -1;
    }
  };
  while (r.pos() < end) {
    tick += r.varint();
    uint8_t first = r.peek();
    if (first & 0x80) {
      status = r.u8();
    } else if (status == 0) {
      throw DataError("SMF: data byte without a status byte");
    }
    if (status == 0xff) {  // meta event
      uint8_t type = r.u8();
      uint32_t len = r.varint();
      if (type == 0x58 && len >= 2) {
        uint8_t nn = r.u8();
        uint8_t dd = r.u8();
        r.skip(len - 2);
        sigs.push_back({tick, nn, 1 << dd});
      } else {
        r.skip(len);
        if (type == 0x2f) break;  // end of track
      }
      continue;
    }
    if (status == 0xf0 || status == 0xf7) {  // sysex cancels running status
      r.skip(r.varint());
      status = 0;
      continue;
    }
    uint8_t kind = status & 0xf0;
    if (kind == 0x90 || kind == 0x80) {
      uint8_t pitch = r.u8() & 0x7f;
      uint8_t velocity = r.u8() & 0x7f;
      if (!collectNotes) continue;
      sawNoteEvent = true;
      if (kind == 0x90 && velocity > 0) {
        closeNote(pitch, tick);  // retrigger of a sounding pitch
        pending[pitch] = tick;
      } else {
        closeNote(pitch, tick);
      }
    } else if (kind == 0xc0 || kind == 0xd0) {
      r.skip(1);
    } else if (kind == 0xa0 || kind == 0xb0 || kind == 0xe0) {
      r.skip(2);
    } else {
      throw DataError("SMF: unexpected status byte");
    }
  }
  long trackEnd = tick;
  for (int p = 0; p < 128; ++p) closeNote(p, trackEnd);
  if (r.pos() < end) r.skip(end - r.pos());
}

}  // namespace

SmfResult parseSmfBytes(const std::vector<uint8_t>& bytes, const std::string& provenance,
                        const SmfOptions& options) {
  ByteReader r(bytes.data(), bytes.size());
  if (bytes.size() < 4 || bytes[0] != 'M' || bytes[1] != 'T' || bytes[2] != 'h' ||
      bytes[3] != 'd') {
    throw DataError(provenance + ": not a Standard MIDI File");
  }
  r.skip(4);
  uint32_t headerLen = r.u32be();
  if (headerLen < 6) throw DataError(provenance + ": malformed MThd chunk");
  uint16_t format = r.u16be();
  uint16_t trackCount = r.u16be();
  uint16_t division = r.u16be();
  r.skip(headerLen - 6);
  if (format > 1) {
    throw DataError(provenance + ": unsupported format " + std::to_string(format));
  }
  if (division & 0x8000) {
    throw DataError(provenance + ": SMPTE time division is not supported");
  }
  if (division == 0) throw DataError(provenance + ": zero ticks per quarter note");
  if (options.track_index < 0 || options.track_index >= trackCount) {
    throw DataError(provenance + ": track index " + std::to_string(options.track_index) +
                    " out of range (file has " + std::to_string(trackCount) + " tracks)");
  }

  std::vector<RawNote> raw;
  std::vector<TimeSig> sigs;
  bool sawNoteEvent = false;
  for (int t = 0; t < trackCount; ++t) {
    uint32_t magic = r.u32be();
    uint32_t length = r.u32be();
    if (magic != 0x4d54726bu) {  // "MTrk"
      r.skip(length);  // unknown chunk types are ignored per the SMF spec
      --t;
      continue;
    }
    walkTrack(r, length, t == options.track_index, raw, sigs, sawNoteEvent);
  }
  if (!sawNoteEvent) {
    throw DataError(provenance + ": no note events on track " +
                    std::to_string(options.track_index));
  }

  // First 4/4 region: the span from the first 4/4 signature (or tick 0 when
  // the file has no signature metas) up to the next differing signature.
  std::stable_sort(sigs.begin(), sigs.end(),
                   [](const TimeSig& a, const TimeSig& b) { return a.tick < b.tick; });
  long regionStart = 0;
  long regionEnd = -1;  // -1: open-ended
  if (!sigs.empty()) {
    size_t i = 0;
    while (i < sigs.size() && !(sigs[i].numerator == 4 && sigs[i].denominator == 4)) ++i;
    if (i == sigs.size() && sigs.front().tick > 0) {
      // Notes before the first meta fall under the default 4/4 signature.
      regionStart = 0;
      regionEnd = sigs.front().tick;
    } else if (i == sigs.size()) {
      throw DataError(provenance + ": no 4/4 region");
    } else {
      regionStart = sigs[i].tick;
      for (size_t j = i + 1; j < sigs.size(); ++j) {
        if (!(sigs[j].numerator == 4 && sigs[j].denominator == 4)) {
          regionEnd = sigs[j].tick;
          break;
        }
      }
    }
  }

  // Quantize onsets/offsets to the 16th-note grid, relative to region start.
  double ticksPerStep = division / 4.0;
  std::vector<NoteEvent> events;
  int dropped = 0;
  std::sort(raw.begin(), raw.end(), [](const RawNote& a, const RawNote& b) {
    return a.on_tick != b.on_tick ? a.on_tick < b.on_tick : a.pitch < b.pitch;
  });
  for (const RawNote& n : raw) {
    if (n.on_tick < regionStart || (regionEnd >= 0 && n.on_tick >= regionEnd)) continue;
    int pitch = n.pitch + options.transpose;
    if (pitch < PITCH_MIN || pitch > PITCH_MAX) {
      ++dropped;
      continue;
    }
    long start = std::lround((n.on_tick - regionStart) / ticksPerStep);
    long finish = std::lround((n.off_tick - regionStart) / ticksPerStep);
    if (regionEnd >= 0) {
      finish = std::min(finish, std::lround((regionEnd - regionStart) / ticksPerStep));
    }
    if (finish <= start) finish = start + 1;  // zero-length after quantization
    events.push_back({pitch, static_cast<int>(start), static_cast<int>(finish - start)});
  }

  // Overlap resolution: simultaneous onsets keep the higher pitch; a note
  // still sounding at the next onset is truncated there.
  std::vector<NoteEvent> mono;
  for (const NoteEvent& e : events) {
    if (!mono.empty() && mono.back().start == e.start) {
      if (e.pitch > mono.back().pitch) mono.back() = e;
      continue;
    }
    if (!mono.empty() && mono.back().start + mono.back().duration > e.start) {
      mono.back().duration = e.start - mono.back().start;
    }
    mono.push_back(e);
  }

  std::string prefix = options.id_prefix;
  if (prefix.empty()) {
    size_t slash = provenance.find_last_of('/');
    prefix = slash == std::string::npos ? provenance : provenance.substr(slash + 1);
    size_t dot = prefix.find_last_of('.');
    if (dot != std::string::npos && dot > 0) prefix = prefix.substr(0, dot);
  }

  SmfResult result;
  result.dropped_notes = dropped;
  result.corpus.provenance = provenance;
  for (NotePhrase& p : slicePhrases(mono, options.policy, prefix, options.genre,
                                    /*padFinalBars=*/true)) {
    result.corpus.phrases.push_back(std::move(p));
    result.corpus.splits.push_back(Split::Train);
  }
  validateCorpus(result.corpus);
  return result;
}

SmfResult parseSmf(const std::string& path, const SmfOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open MIDI file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string& s = buf.str();
  std::vector<uint8_t> bytes(s.begin(), s.end());
  return parseSmfBytes(bytes, path, options);
}

}  // namespace melvae
