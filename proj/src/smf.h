#ifndef MELVAE_SMF_H
#define MELVAE_SMF_H

#include <cstdint>
#include <string>
#include <vector>

#include "corpus.h"

namespace melvae {

struct SmfOptions {
  int track_index = 0;
  int transpose = 0;
  SlicePolicy policy = SlicePolicy::NonOverlapping;
  Genre genre = Genre::Other;
  std::string id_prefix;  // empty: derived from the file name
};

struct SmfResult {
  Corpus corpus;          // every phrase assigned to the training split
  int dropped_notes = 0;  // out of the C3..B6 range after transposition
};

// Standard MIDI File subset: header "MThd", formats 0 and 1, note-on/off with
// running status, tempo and time-signature metas; everything else is skipped.
// Notes are taken from the selected track, quantized to the nearest 16th-note
// step, restricted to the first 4/4 region (a file without signature metas
// counts as 4/4 throughout), overlap-resolved and cut into 64-step phrases.
SmfResult parseSmf(const std::string& path, const SmfOptions& options = {});
SmfResult parseSmfBytes(const std::vector<uint8_t>& bytes, const std::string& provenance,
                        const SmfOptions& options = {});

}  // namespace melvae

#endif  // MELVAE_SMF_H
