#ifndef MELVAE_ERRORS_H
#define MELVAE_ERRORS_H

#include <stdexcept>
#include <string>

namespace melvae {

// Thrown for malformed or invariant-violating input data (corpus files,
// configs, MIDI). Maps to exit code 2 in the CLI.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation leaves the finite domain (NaN/Inf loss,
// degenerate numerics the caller did not opt into). Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace melvae

#endif  // MELVAE_ERRORS_H
