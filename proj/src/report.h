#ifndef MELVAE_REPORT_H
#define MELVAE_REPORT_H

#include <array>
#include <string>

#include "corpus.h"

namespace melvae {

// Note-count histograms over the corpus (every split). Index 0 is pitch 48
// for the basic histogram and pitch class C for the 12-bin one.
std::array<double, PITCH_ROWS> pitchHistogram(const Corpus& corpus, bool normalize);
std::array<double, 12> pitchClassHistogram(const Corpus& corpus, bool normalize);

// bin,label,value rows; labels are note names ("C3".."B6" / "C".."B").
std::string pitchHistogramCsv(const std::array<double, PITCH_ROWS>& bins);
std::string pitchClassHistogramCsv(const std::array<double, 12>& bins);

// Minimal hand-rolled bar charts; the 48-bin variant carries the octave
// bands I-IV along the pitch axis.
std::string pitchHistogramSvg(const std::array<double, PITCH_ROWS>& bins,
                              const std::string& title);
std::string pitchClassHistogramSvg(const std::array<double, 12>& bins, const std::string& title);

// Writes <label>-pitch.{csv,svg} and <label>-pitch-class.{csv,svg} into dir.
// Throws DataError when the corpus has no notes.
void writeHistogramReport(const Corpus& corpus, const std::string& dir, const std::string& label,
                          bool normalize);

}  // namespace melvae

#endif  // MELVAE_REPORT_H
