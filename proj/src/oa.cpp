#include "oa.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.h"

namespace melvae {

namespace {

double vectorDistance(const std::vector<double>& a, const std::vector<double>& b,
                      const char* name) {
  if (a.size() != b.size()) {
    throw DataError(std::string(name) + ": dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
  }
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

template <size_t N>
double arrayDistance(const std::array<double, N>& a, const std::array<double, N>& b) {
  double sq = 0.0;
  for (size_t i = 0; i < N; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

}  // namespace

double featureDistance(const FeatureVector& a, const FeatureVector& b, int featureIndex) {
  switch (featureIndex) {
    case 0: return std::abs(static_cast<double>(a.nc - b.nc));
    case 1: return std::abs(a.nc_per_bar - b.nc_per_bar);
    case 2: return vectorDistance(a.nlh, b.nlh, "NLH");
    case 3: return vectorDistance(a.nltm, b.nltm, "NLTM");
    case 4: return std::abs(static_cast<double>(a.pc - b.pc));
    case 5: return std::abs(a.pc_per_bar - b.pc_per_bar);
    case 6: return std::abs(static_cast<double>(a.pr - b.pr));
    case 7: return arrayDistance(a.pch, b.pch);
    case 8: return arrayDistance(a.pctm, b.pctm);
    default: throw DataError("feature index out of range: " + std::to_string(featureIndex));
  }
}

std::vector<double> crossDistances(const std::vector<FeatureVector>& a,
                                   const std::vector<FeatureVector>* b, int featureIndex) {
  if (a.size() < 2) throw DataError("cross_distances: need at least 2 items");
  std::vector<double> out;
  if (b == nullptr) {
    out.reserve(a.size() * (a.size() - 1) / 2);
    for (size_t i = 0; i < a.size(); ++i) {
      for (size_t j = i + 1; j < a.size(); ++j) {
        out.push_back(featureDistance(a[i], a[j], featureIndex));
      }
    }
  } else {
    if (b->empty()) throw DataError("cross_distances: second set is empty");
    out.reserve(a.size() * b->size());
    for (const FeatureVector& fa : a) {
      for (const FeatureVector& fb : *b) out.push_back(featureDistance(fa, fb, featureIndex));
    }
  }
  return out;
}

namespace {

// Type-7 (linear interpolation) quantile of pre-sorted data.
double quantileSorted(const std::vector<double>& sorted, double p) {
  double h = static_cast<double>(sorted.size() - 1) * p;
  size_t lo = static_cast<size_t>(h);
  double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

std::optional<double> silvermanBandwidth(const std::vector<double>& distances) {
  size_t n = distances.size();
  if (n < 2) throw DataError("silverman_bandwidth: need at least 2 values");
  double mean = 0.0;
  for (double d : distances) mean += d;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : distances) ss += (d - mean) * (d - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return std::nullopt;
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  double iqr = quantileSorted(sorted, 0.75) - quantileSorted(sorted, 0.25);
  double spread = iqr == 0.0 ? sd : std::min(sd, iqr / 1.34);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

DistancePdf kdePdf(const std::vector<double>& distances, double bandwidth, int gridPoints) {
  if (bandwidth <= 0.0) throw DataError("kde_pdf: bandwidth must be positive");
  if (gridPoints < 64) throw DataError("kde_pdf: need at least 64 grid points");
  if (distances.empty()) throw DataError("kde_pdf: empty sample");
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  DistancePdf pdf;
  pdf.bandwidth = bandwidth;
  pdf.lo = sorted.front() - 3.0 * bandwidth;
  pdf.hi = sorted.back() + 3.0 * bandwidth;
  pdf.density.resize(static_cast<size_t>(gridPoints));
  double step = (pdf.hi - pdf.lo) / static_cast<double>(gridPoints - 1);
  double invNh = 1.0 / (static_cast<double>(sorted.size()) * bandwidth);
  const double NORM = 0.3989422804014326779;  // 1/sqrt(2*pi)
  // Kernel support cutoff: phi(8.5) < 1e-16, so samples beyond +-8.5h
  // contribute nothing representable at double precision.
  double cutoff = 8.5 * bandwidth;
  for (int g = 0; g < gridPoints; ++g) {
    double x = pdf.lo + step * static_cast<double>(g);
    auto first = std::lower_bound(sorted.begin(), sorted.end(), x - cutoff);
    auto last = std::upper_bound(sorted.begin(), sorted.end(), x + cutoff);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) {
      double u = (x - *it) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    pdf.density[static_cast<size_t>(g)] = acc * NORM * invNh;
  }
  // Renormalize: the +-3h span cuts a small tail, and the report contract
  // wants the grid integral at 1.
  double integral = 0.0;
  for (size_t g = 1; g < pdf.density.size(); ++g) {
    integral += 0.5 * (pdf.density[g - 1] + pdf.density[g]) * step;
  }
  if (integral <= 0.0) throw DataError("kde_pdf: zero-mass density");
  for (double& d : pdf.density) d /= integral;
  return pdf;
}

namespace {

// Linear interpolation on the uniform grid; zero outside the support.
double evalPdf(const DistancePdf& pdf, double x) {
  if (x < pdf.lo || x > pdf.hi) return 0.0;
  double step = (pdf.hi - pdf.lo) / static_cast<double>(pdf.density.size() - 1);
  double pos = (x - pdf.lo) / step;
  size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= pdf.density.size()) return pdf.density.back();
  double frac = pos - static_cast<double>(lo);
  return pdf.density[lo] + frac * (pdf.density[lo + 1] - pdf.density[lo]);
}

}  // namespace

double overlapArea(const DistancePdf& p, const DistancePdf& q) {
  double lo = std::min(p.lo, q.lo);
  double hi = std::max(p.hi, q.hi);
  size_t points = std::max(p.density.size(), q.density.size());
  double step = (hi - lo) / static_cast<double>(points - 1);
  double integral = 0.0;
  double prev = std::min(evalPdf(p, lo), evalPdf(q, lo));
  for (size_t g = 1; g < points; ++g) {
    double x = lo + step * static_cast<double>(g);
    double cur = std::min(evalPdf(p, x), evalPdf(q, x));
    integral += 0.5 * (prev + cur) * step;
    prev = cur;
  }
  return std::clamp(integral, 0.0, 1.0);
}

namespace {

double meanOf(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

}  // namespace

OaReport evaluateSets(const Corpus& target, const Corpus& generated, const OaOptions& options) {
  if (target.size() < 2 || generated.size() < 2) {
    throw DataError("evaluate_sets: both corpora need at least 2 phrases");
  }
  std::vector<FeatureVector> targetF = extractAll(target, options.rests);
  std::vector<FeatureVector> generatedF = extractAll(generated, options.rests);
  OaReport report;
  report.target_size = target.size();
  report.generated_size = generated.size();
  report.rests = options.rests;
  report.grid_points = options.grid_points;
  double total = 0.0;
  for (int f = 0; f < NUM_FEATURES; ++f) {
    std::vector<double> intra = crossDistances(targetF, nullptr, f);
    std::vector<double> inter = crossDistances(generatedF, &targetF, f);
    std::optional<double> hIntra = silvermanBandwidth(intra);
    std::optional<double> hInter = silvermanBandwidth(inter);
    double oa;
    if (!hIntra || !hInter) {
      // Point-mass rule: zero-variance sets overlap iff their means agree.
      oa = std::abs(meanOf(intra) - meanOf(inter)) <= 1e-9 ? 1.0 : 0.0;
    } else {
      DistancePdf pdfIntra = kdePdf(intra, *hIntra, options.grid_points);
      DistancePdf pdfInter = kdePdf(inter, *hInter, options.grid_points);
      oa = overlapArea(pdfIntra, pdfInter);
    }
    report.oa[static_cast<size_t>(f)] = oa;
    total += oa;
  }
  report.average = total / NUM_FEATURES;
  return report;
}

std::string oaReportCsv(const OaReport& report) {
  std::ostringstream out;
  out << "feature,oa\n";
  char buf[64];
  for (int f = 0; f < NUM_FEATURES; ++f) {
    std::snprintf(buf, sizeof(buf), "%.6f", report.oa[static_cast<size_t>(f)]);
    out << FEATURE_NAMES[static_cast<size_t>(f)] << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.average);
  out << "average," << buf << "\n";
  out << "# regime=" << (report.regime.empty() ? "none" : report.regime) << "\n";
  out << "# R=" << report.ratio << "\n";
  out << "# seed=" << report.seed << "\n";
  out << "# target_size=" << report.target_size << "\n";
  out << "# generated_size=" << report.generated_size << "\n";
  out << "# rests=" << (report.rests ? "on" : "off") << "\n";
  out << "# grid_points=" << report.grid_points << "\n";
  return out.str();
}

void writeOaReport(const OaReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write OA report: " + path);
  out << oaReportCsv(report);
}

}  // namespace melvae
