#include "report.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "errors.h"

namespace melvae {

namespace {

const char* const NOTE_NAMES[12] = {"C",  "C#", "D",  "D#", "E",  "F",
                                    "F#", "G",  "G#", "A",  "A#", "B"};

std::string pitchName(int pitch) {
  return std::string(NOTE_NAMES[pitch % 12]) + std::to_string(pitch / 12 - 1);
}

std::string formatValue(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void normalizeBins(double* bins, size_t n) {
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) total += bins[i];
  if (total > 0.0) {
    for (size_t i = 0; i < n; ++i) bins[i] /= total;
  }
}

// Shared minimal bar chart: left value axis with four ticks, one labeled bar
// per bin, optional octave-band row under the pitch axis.
std::string barChartSvg(const double* bins, size_t n, const std::string& title,
                        const std::function<std::string(size_t)>& binLabel, int labelEvery,
                        bool octaveBands) {
  const int barWidth = n > 24 ? 12 : 32;
  const int gap = 2;
  const int left = 48, top = 28, plotHeight = 220;
  const int bandRow = octaveBands ? 22 : 0;
  const int width = left + static_cast<int>(n) * (barWidth + gap) + 16;
  const int height = top + plotHeight + 40 + bandRow;
  double maxValue = 0.0;
  for (size_t i = 0; i < n; ++i) maxValue = std::max(maxValue, bins[i]);
  if (maxValue <= 0.0) maxValue = 1.0;

  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "font-family=\"sans-serif\" font-size=\"10\">\n",
                width, height);
  svg += buf;
  svg += "<text x=\"" + std::to_string(left) + "\" y=\"16\" font-size=\"13\">" + title +
         "</text>\n";
  int baseline = top + plotHeight;
  for (int tick = 0; tick <= 4; ++tick) {
    double value = maxValue * tick / 4.0;
    int y = baseline - plotHeight * tick / 4;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"#ccc\"/>\n", left, y,
                  width - 8, y);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%.3g</text>\n", left - 4, y + 3,
                  value);
    svg += buf;
  }
  for (size_t i = 0; i < n; ++i) {
    int barHeight = static_cast<int>(plotHeight * bins[i] / maxValue + 0.5);
    int x = left + static_cast<int>(i) * (barWidth + gap);
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#4477aa\"/>\n", x,
                  baseline - barHeight, barWidth, barHeight);
    svg += buf;
    if (labelEvery > 0 && i % static_cast<size_t>(labelEvery) == 0) {
      std::snprintf(buf, sizeof(buf),
                    "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                    x + barWidth / 2, baseline + 14, binLabel(i).c_str());
      svg += buf;
    }
  }
  if (octaveBands) {
    static const char* const ROMAN[4] = {"I", "II", "III", "IV"};
    int y = baseline + 22;
    for (int band = 0; band < 4; ++band) {
      int x0 = left + band * 12 * (barWidth + gap);
      int x1 = x0 + 12 * (barWidth + gap) - gap;
      std::snprintf(buf, sizeof(buf),
                    "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"#333\"/>\n", x0,
                    y + 6, x1, y + 6);
      svg += buf;
      std::snprintf(buf, sizeof(buf),
                    "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n", (x0 + x1) / 2,
                    y + 18, ROMAN[band]);
      svg += buf;
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::array<double, PITCH_ROWS> pitchHistogram(const Corpus& corpus, bool normalize) {
  std::array<double, PITCH_ROWS> bins{};
  for (const NotePhrase& phrase : corpus.phrases) {
    for (const NoteEvent& note : phrase.notes) {
      bins[static_cast<size_t>(note.pitch - PITCH_MIN)] += 1.0;
    }
  }
  if (normalize) normalizeBins(bins.data(), bins.size());
  return bins;
}

std::array<double, 12> pitchClassHistogram(const Corpus& corpus, bool normalize) {
  std::array<double, 12> bins{};
  for (const NotePhrase& phrase : corpus.phrases) {
    for (const NoteEvent& note : phrase.notes) bins[static_cast<size_t>(note.pitch % 12)] += 1.0;
  }
  if (normalize) normalizeBins(bins.data(), bins.size());
  return bins;
}

std::string pitchHistogramCsv(const std::array<double, PITCH_ROWS>& bins) {
  std::string out = "bin,label,value\n";
  for (size_t i = 0; i < bins.size(); ++i) {
    out += std::to_string(i) + "," + pitchName(PITCH_MIN + static_cast<int>(i)) + "," +
           formatValue(bins[i]) + "\n";
  }
  return out;
}

std::string pitchClassHistogramCsv(const std::array<double, 12>& bins) {
  std::string out = "bin,label,value\n";
  for (size_t i = 0; i < bins.size(); ++i) {
    out += std::to_string(i) + "," + NOTE_NAMES[i] + "," + formatValue(bins[i]) + "\n";
  }
  return out;
}

std::string pitchHistogramSvg(const std::array<double, PITCH_ROWS>& bins,
                              const std::string& title) {
  return barChartSvg(
      bins.data(), bins.size(), title,
      [](size_t i) { return pitchName(PITCH_MIN + static_cast<int>(i)); }, 6, true);
}

std::string pitchClassHistogramSvg(const std::array<double, 12>& bins, const std::string& title) {
  return barChartSvg(
      bins.data(), bins.size(), title, [](size_t i) { return std::string(NOTE_NAMES[i]); }, 1,
      false);
}

void writeHistogramReport(const Corpus& corpus, const std::string& dir, const std::string& label,
                          bool normalize) {
  bool any = false;
  for (const NotePhrase& phrase : corpus.phrases) any = any || !phrase.notes.empty();
  if (!any) throw DataError("histogram report: corpus has no notes");
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::string path = dir + "/" + label + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report file: " + path);
    out << content;
  };
  auto pitch = pitchHistogram(corpus, normalize);
  auto klass = pitchClassHistogram(corpus, normalize);
  write("-pitch.csv", pitchHistogramCsv(pitch));
  write("-pitch.svg", pitchHistogramSvg(pitch, label + ": pitch histogram"));
  write("-pitch-class.csv", pitchClassHistogramCsv(klass));
  write("-pitch-class.svg", pitchClassHistogramSvg(klass, label + ": pitch class histogram"));
}

}  // namespace melvae
