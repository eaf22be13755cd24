#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlc {

inline constexpr const char* kVersion = "0.1.0";

// Probabilities are kept strictly inside (eps, 1-eps) so log() stays finite.
inline constexpr double kProbEps = 1e-10;

// Input/usage problems: bad files, malformed data, inconsistent configuration.
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures: degenerate classes, singular systems, non-convergence.
class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using WarningLog = std::vector<std::string>;

inline void warn(WarningLog* log, std::string msg) {
  if (log != nullptr) log->push_back(std::move(msg));
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// CPU time of the calling thread; used for timing comparisons that should not
// be distorted by other worker threads sharing the machine.
double thread_cpu_seconds();

}  // namespace mlc
