#pragma once

// Pieces shared by the iterative solvers.

#include <chrono>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptycho/field.hpp"
#include "ptycho/metrics.hpp"
#include "ptycho/sim.hpp"

namespace ptycho {

/// Raised when an iterate stops being finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& solver, std::size_t iteration)
      : std::runtime_error(solver + ": non-finite values in iterate at iteration " +
                           std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

using PatchStack = std::vector<ComplexField>;

struct SolveResult {
  ComplexField image;
  ConvergenceTrace trace;
};

/// Ground truth for trace evaluation; the NRMSE is taken over the covered region.
struct TraceReference {
  const ComplexField* truth = nullptr;
};

enum class InitMode { Ones, Random };

inline InitMode parse_init_mode(const std::string& s) {
  if (s == "ones") return InitMode::Ones;
  if (s == "random") return InitMode::Random;
  throw std::invalid_argument("unknown init mode '" + s + "' (expected ones or random)");
}

inline std::string to_string(InitMode m) { return m == InitMode::Ones ? "ones" : "random"; }

/// Constant unit image, or a seeded random image with amplitude in [0.5, 1] and any phase.
inline ComplexField initial_image(std::size_t rows, std::size_t cols, InitMode mode,
                                  std::uint64_t seed = 0) {
  if (mode == InitMode::Ones) return ComplexField(rows, cols, Complex{1.0, 0.0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x1a17u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  ComplexField x(rows, cols);
  for (auto& v : x) {
    const double a = amp(rng);
    v = std::polar(a, phase(rng));
  }
  return x;
}

inline bool all_finite(const PatchStack& s) {
  for (const auto& p : s)
    if (!all_finite(p)) return false;
  return true;
}

inline void check_measurements(const AmplitudeStack& y, const ComplexField& probe,
                               const ScanGrid& grid, const ComplexField& init, const char* who) {
  if (y.size() != grid.count())
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(y.size()) +
                                " amplitude patterns for a grid of " + std::to_string(grid.count()));
  for (const auto& yj : y)
    if (yj.rows() != grid.patch_size() || yj.cols() != grid.patch_size())
      throw std::invalid_argument(std::string(who) + ": amplitude pattern shape mismatch");
  detail::check_patch(grid, probe.rows(), probe.cols(), who);
  detail::check_image(grid, init.rows(), init.cols(), who);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// phase(w) with the 0/0 = 0 convention, scaled to the measured magnitude.
inline Complex magnitude_replace(Complex w, double y) {
  const double m = std::abs(w);
  return m == 0.0 ? Complex{} : w * (y / m);
}

}  // namespace ptycho
