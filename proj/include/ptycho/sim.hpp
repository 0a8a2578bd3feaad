#pragma once

// Synthetic objects and probes, scan geometry, and the far-field measurement model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/parallel.hpp"

namespace ptycho {

/// Detector amplitudes y_j, one Np x Np array per scan position.
using AmplitudeStack = std::vector<RealField>;

enum class Normalization { GlobalMax, PerPatternMax };

inline std::string to_string(Normalization n) {
  return n == Normalization::GlobalMax ? "global-max" : "per-pattern-max";
}

inline Normalization parse_normalization(const std::string& s) {
  if (s == "global-max") return Normalization::GlobalMax;
  if (s == "per-pattern-max") return Normalization::PerPatternMax;
  throw std::invalid_argument("unknown normalization mode '" + s +
                              "' (expected global-max or per-pattern-max)");
}

struct GridShape {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::size_t spacing = 56;
};

/// Row-major grid of patch offsets whose bounding box is centered in the image
/// (floor rounding on an odd margin).
inline ScanGrid make_scan_grid(std::size_t image_rows, std::size_t image_cols,
                               std::size_t probe_size, GridShape shape) {
  if (shape.rows == 0 || shape.cols == 0)
    throw std::invalid_argument("make_scan_grid: grid dimensions must be positive");
  if (probe_size == 0) throw std::invalid_argument("make_scan_grid: probe size must be positive");
  if (shape.spacing == 0 && (shape.rows > 1 || shape.cols > 1))
    throw std::invalid_argument("make_scan_grid: spacing must be positive for multi-position grids");
  const std::size_t extent_r = (shape.rows - 1) * shape.spacing + probe_size;
  const std::size_t extent_c = (shape.cols - 1) * shape.spacing + probe_size;
  if (extent_r > image_rows || extent_c > image_cols)
    throw std::invalid_argument("make_scan_grid: " + std::to_string(extent_r) + "x" +
                                std::to_string(extent_c) + " scan extent does not fit in " +
                                std::to_string(image_rows) + "x" + std::to_string(image_cols) +
                                " image");
  const std::size_t r0 = (image_rows - extent_r) / 2;
  const std::size_t c0 = (image_cols - extent_c) / 2;
  std::vector<Offset> offsets;
  offsets.reserve(shape.rows * shape.cols);
  for (std::size_t i = 0; i < shape.rows; ++i)
    for (std::size_t k = 0; k < shape.cols; ++k)
      offsets.push_back({r0 + i * shape.spacing, c0 + k * shape.spacing});
  return ScanGrid(image_rows, image_cols, probe_size, std::move(offsets));
}

namespace detail {

/// Smooth random field: a sum of low-frequency plane waves with random amplitude and phase,
/// rescaled so that max |f| = 1.
inline RealField smooth_random_field(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                     int max_freq, int terms) {
  std::uniform_int_distribution<int> freq(-max_freq, max_freq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Wave {
    double fr, fc, amp, phase;
  };
  std::vector<Wave> waves;
  waves.reserve(terms);
  for (int t = 0; t < terms; ++t) {
    const int u = freq(rng), v = freq(rng);
    const double amp = unit(rng) / (1.0 + std::hypot(u, v));
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    waves.push_back({static_cast<double>(u) / static_cast<double>(rows),
                     static_cast<double>(v) / static_cast<double>(cols), amp, phase});
  }
  RealField f(rows, cols);
  double peak = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (const auto& w : waves)
        s += w.amp * std::cos(2.0 * std::numbers::pi * (w.fr * static_cast<double>(r) +
                                                        w.fc * static_cast<double>(c)) +
                              w.phase);
      f(r, c) = s;
      peak = std::max(peak, std::abs(s));
    }
  if (peak > 0.0)
    for (auto& v : f) v /= peak;
  return f;
}

}  // namespace detail

/// Band-limited random transmittance: amplitude in [0.5, 1], phase in [-pi/2, pi/2].
inline ComplexField synth_object(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("synth_object: empty dimensions");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x0b1ec7u};
  std::mt19937_64 rng(seq);
  const RealField amp = detail::smooth_random_field(rows, cols, rng, 6, 24);
  const RealField phase = detail::smooth_random_field(rows, cols, rng, 6, 24);
  ComplexField x(rows, cols);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::polar(0.75 + 0.25 * amp[i], 0.5 * std::numbers::pi * phase[i]);
  return x;
}

/// Amplitude below which the probe roll-off is cut to exactly zero. Pixels that faint carry
/// almost no signal and would otherwise count as covered.
inline constexpr double kProbeSupportFloor = 0.1;

/// Circular aperture probe: flat amplitude out to radius 0.4*size, raised-cosine roll-off
/// over the next 0.05*size (truncated to zero below kProbeSupportFloor), and a mild
/// quadratic phase of about 2 rad at the aperture edge with a seed-dependent curvature.
inline ComplexField synth_probe(std::size_t size, std::uint64_t seed) {
  if (size < 8) throw std::invalid_argument("synth_probe: size must be at least 8");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x9a0beu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  const double n = static_cast<double>(size);
  const double radius = 0.4 * n, rolloff = 0.05 * n;
  const double center = 0.5 * (n - 1.0);
  const double curvature = 0.65 * std::numbers::pi * jitter(rng) / (radius * radius);
  ComplexField d(size, size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double rad = std::hypot(static_cast<double>(r) - center, static_cast<double>(c) - center);
      double a = 0.0;
      if (rad <= radius)
        a = 1.0;
      else if (rad < radius + rolloff)
        a = 0.5 * (1.0 + std::cos(std::numbers::pi * (rad - radius) / rolloff));
      if (a < kProbeSupportFloor) a = 0.0;
      d(r, c) = std::polar(a, curvature * rad * rad);
    }
  return d;
}

/// y_j = |F (d . P_j x)|.
inline AmplitudeStack forward_amplitude(const ComplexField& x, const ComplexField& probe,
                                        const ScanGrid& grid, std::size_t workers = 1) {
  ptycho::detail::check_image(grid, x.rows(), x.cols(), "forward_amplitude");
  ptycho::detail::check_patch(grid, probe.rows(), probe.cols(), "forward_amplitude");
  const Fft2 fft(grid.patch_size(), grid.patch_size());
  AmplitudeStack y(grid.count());
  parallel_for(grid.count(), workers, [&](std::size_t j) {
    ComplexField frame = extract_patch(x, grid, j);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= probe[i];
    fft.forward(frame);
    RealField amp(frame.rows(), frame.cols());
    for (std::size_t i = 0; i < frame.size(); ++i) amp[i] = std::abs(frame[i]);
    y[j] = std::move(amp);
  });
  return y;
}

/// sqrt(r_p / M) per pattern, where M is the peak intensity that the pattern is normalized by.
inline std::vector<double> poisson_scale_factors(const AmplitudeStack& clean, double peak_rate,
                                                 Normalization mode) {
  if (!(peak_rate > 0.0) || !std::isfinite(peak_rate))
    throw std::invalid_argument("peak photon rate must be positive");
  std::vector<double> peaks(clean.size(), 0.0);
  for (std::size_t j = 0; j < clean.size(); ++j)
    for (double v : clean[j]) peaks[j] = std::max(peaks[j], v * v);
  if (mode == Normalization::GlobalMax) {
    const double m = peaks.empty() ? 0.0 : *std::max_element(peaks.begin(), peaks.end());
    std::fill(peaks.begin(), peaks.end(), m);
  }
  std::vector<double> scale(clean.size());
  for (std::size_t j = 0; j < clean.size(); ++j)
    scale[j] = peaks[j] > 0.0 ? std::sqrt(peak_rate / peaks[j]) : 0.0;
  return scale;
}

/// y^_j = sqrt(Pois(y_j^2 / M * r_p)), in scaled-count amplitude units.
/// Pattern j draws from its own engine seeded by (seed, j).
inline AmplitudeStack add_poisson_noise(const AmplitudeStack& clean, double peak_rate,
                                        Normalization mode, std::uint64_t seed,
                                        std::size_t workers = 1) {
  const std::vector<double> scale = poisson_scale_factors(clean, peak_rate, mode);
  AmplitudeStack noisy(clean.size());
  parallel_for(clean.size(), workers, [&](std::size_t j) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(j >> 32)};
    std::mt19937_64 rng(seq);
    const double s2 = scale[j] * scale[j];
    RealField out(clean[j].rows(), clean[j].cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double mean = clean[j][i] * clean[j][i] * s2;
      if (mean <= 0.0) {
        out[i] = 0.0;
        continue;
      }
      std::poisson_distribution<std::int64_t> pois(mean);
      out[i] = std::sqrt(static_cast<double>(pois(rng)));
    }
    noisy[j] = std::move(out);
  });
  return noisy;
}

}  // namespace ptycho
