#pragma once

// Test oracles and fixtures. The oracles here are deliberately naive so that they share
// no code path with the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ptycho/field.hpp"
#include "ptycho/sim.hpp"

namespace testing_support {

using ptycho::Complex;
using ptycho::ComplexField;

inline ComplexField random_field(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexField f(rows, cols);
  for (auto& v : f) {
    const double re = n(rng);
    v = {re, n(rng)};
  }
  return f;
}

inline ptycho::RealField random_amplitudes(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  ptycho::RealField f(rows, cols);
  for (auto& v : f) v = u(rng);
  return f;
}

/// Direct O(N^4) orthonormal 2D DFT; sign = -1 forward, +1 inverse.
inline ComplexField direct_dft2(const ComplexField& f, int sign) {
  const std::size_t R = f.rows(), C = f.cols();
  ComplexField out(R, C);
  const double scale = 1.0 / std::sqrt(static_cast<double>(R * C));
  for (std::size_t k = 0; k < R; ++k)
    for (std::size_t l = 0; l < C; ++l) {
      long double re = 0, im = 0;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const long double ang = sign * 2.0L * std::numbers::pi_v<long double> *
                                  (static_cast<long double>((k * r) % R) / R +
                                   static_cast<long double>((l * c) % C) / C);
          const long double cr = std::cos(ang), ci = std::sin(ang);
          re += f(r, c).real() * cr - f(r, c).imag() * ci;
          im += f(r, c).real() * ci + f(r, c).imag() * cr;
        }
      out(k, l) = {static_cast<double>(re * scale), static_cast<double>(im * scale)};
    }
  return out;
}

inline double norm2(const ComplexField& f) {
  double s = 0;
  for (const auto& v : f) s += std::norm(v);
  return std::sqrt(s);
}

inline double max_abs_diff(const ComplexField& a, const ComplexField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(const std::vector<ComplexField>& a, const std::vector<ComplexField>& b) {
  double num = 0, den = 0;
  for (std::size_t j = 0; j < a.size(); ++j)
    for (std::size_t i = 0; i < a[j].size(); ++i) {
      num += std::norm(a[j][i] - b[j][i]);
      den += std::norm(b[j][i]);
    }
  return std::sqrt(num / den);
}

inline Complex inner(const ComplexField& a, const ComplexField& b) {
  Complex s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

/// Scaled-down instance with the reference geometry ratios: 176^2 object, 64^2 probe,
/// 8x8 grid at spacing 14.
struct DeskInstance {
  ComplexField truth;
  ComplexField probe;
  ptycho::ScanGrid grid;
  ptycho::AmplitudeStack clean;
};

inline DeskInstance desk_instance(std::uint64_t seed = 1, std::size_t workers = 1) {
  ptycho::ScanGrid grid = ptycho::make_scan_grid(176, 176, 64, {8, 8, 14});
  ComplexField truth = ptycho::synth_object(176, 176, seed);
  ComplexField probe = ptycho::synth_probe(64, seed + 1);
  ptycho::AmplitudeStack y = ptycho::forward_amplitude(truth, probe, grid, workers);
  return {std::move(truth), std::move(probe), std::move(grid), std::move(y)};
}

}  // namespace testing_support
