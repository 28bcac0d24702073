#ifndef MELVAE_OA_H
#define MELVAE_OA_H

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corpus.h"
#include "melody_features.h"

namespace melvae {

// Report row order used by every OA table ("average" is appended last).
inline constexpr std::array<const char*, 9> FEATURE_NAMES{
    "NC", "NC/bar", "NLH", "NLTM", "PC", "PC/bar", "PR", "PCH", "PCTM"};
constexpr int NUM_FEATURES = 9;

// Scalar features: absolute difference. Vector/matrix features: Euclidean
// norm of the elementwise difference (matrices flattened row-major).
double featureDistance(const FeatureVector& a, const FeatureVector& b, int featureIndex);

enum class DistanceKind { IntraTarget, IntraGenerated, Inter };

struct DistanceSample {
  std::string feature_name;
  DistanceKind kind = DistanceKind::IntraTarget;
  std::vector<double> distances;
};

// b == nullptr: all C(|a|,2) unordered intra-a pairs; otherwise all |a|x|b|
// ordered cross pairs. Deterministic pair order.
std::vector<double> crossDistances(const std::vector<FeatureVector>& a,
                                   const std::vector<FeatureVector>* b, int featureIndex);

// Rule-of-thumb bandwidth h = 0.9 * min(sd, IQR/1.34) * n^(-1/5) with the
// Bessel-corrected standard deviation and linearly interpolated quartiles.
// IQR = 0 falls back to the standard deviation alone; zero variance yields
// nullopt and the caller must switch to the point-mass rule.
std::optional<double> silvermanBandwidth(const std::vector<double>& distances);

struct DistancePdf {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> density;  // uniform grid over [lo, hi]
  double bandwidth = 0.0;
};

// Gaussian-kernel density on a uniform grid spanning [min-3h, max+3h],
// renormalized so the trapezoid integral is 1.
DistancePdf kdePdf(const std::vector<double>& distances, double bandwidth, int gridPoints = 1000);

// Trapezoid integral of min(p, q) over the union grid (common span, larger
// point count, linear interpolation, zero outside each support); clamped to
// [0, 1]. Symmetric in its arguments.
double overlapArea(const DistancePdf& p, const DistancePdf& q);

struct OaOptions {
  bool rests = false;    // 24-dim NLH/NLTM when set
  int grid_points = 1000;
};

struct OaReport {
  std::array<double, NUM_FEATURES> oa{};
  double average = 0.0;
  size_t target_size = 0;
  size_t generated_size = 0;
  bool rests = false;
  int grid_points = 1000;
  // Filled by the caller for the CSV config echo.
  std::string regime;
  int ratio = 0;  // 0: not applicable
  uint64_t seed = 0;
};

// Per feature: OA between the PDF of intra-target distances and the PDF of
// generated-to-target inter-set distances. Zero-variance distance sets use
// the point-mass rule (OA = 1 iff the means agree within 1e-9).
OaReport evaluateSets(const Corpus& target, const Corpus& generated,
                      const OaOptions& options = {});

// Header "feature,oa", nine rows plus "average", then a comment block echoing
// the configuration.
std::string oaReportCsv(const OaReport& report);
void writeOaReport(const OaReport& report, const std::string& path);

}  // namespace melvae

#endif  // MELVAE_OA_H
