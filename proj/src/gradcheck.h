#ifndef MELVAE_GRADCHECK_H
#define MELVAE_GRADCHECK_H

#include <cstdint>
#include <string>
#include <vector>

namespace melvae {

// One finite-difference suite: a loss built from labeled leaves, every leaf
// coordinate compared against central differences.
struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  size_t coordinates = 0;        // leaf coordinates swept
  std::string worst_coordinate;  // "leaf[idx]" of the largest relative error

  bool passed() const { return max_rel_err <= tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;

  bool passed() const;
  // The case whose error consumes the largest fraction of its tolerance.
  const GradCheckCase& worst() const;
};

// Runs every per-op suite (tolerance 1e-4) plus both full objectives at
// reduced dims (tolerance 1e-3). Deterministic in the seed.
GradCheckReport runGradCheck(uint64_t seed = 17);

// Fixed-width text table, one row per case, with a final verdict line naming
// the worst offender on failure.
std::string gradCheckText(const GradCheckReport& report);

}  // namespace melvae

#endif  // MELVAE_GRADCHECK_H
