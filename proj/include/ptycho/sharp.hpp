#pragma once

// SHARP / SHARP+ relaxed-reflector iterations on illuminated frames s_j = D P_j x.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/solver.hpp"

namespace ptycho::sharp {

using FrameStack = std::vector<ComplexField>;

enum class Variant { Sharp, SharpPlus };

inline std::string to_string(Variant v) { return v == Variant::Sharp ? "sharp" : "sharp_plus"; }

struct Params {
  double beta = 0.5;
  std::size_t max_iters = 100;
  std::size_t eval_every = 10;
  Variant variant = Variant::SharpPlus;
  std::size_t workers = 1;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("sharp: beta must lie in (0, 1)");
    if (eval_every == 0) throw std::invalid_argument("sharp: eval_every must be positive");
  }
};

/// Frame-domain projections for one problem instance.
class Projections {
 public:
  Projections(const AmplitudeStack& y, const ComplexField& probe, const ScanGrid& grid,
              std::size_t workers = 1)
      : y_(y),
        probe_(probe),
        grid_(grid),
        illumination_(build_coverage(probe, grid, 2.0)),
        fft_(grid.patch_size(), grid.patch_size()),
        workers_(workers) {
    if (y_.size() != grid_.count())
      throw std::invalid_argument("sharp: amplitude stack size does not match grid");
    detail::check_patch(grid_, probe_.rows(), probe_.cols(), "sharp");
  }

  const CoverageMap& illumination() const noexcept { return illumination_; }

  /// P_a: keep the Fourier phase of each frame, replace its magnitude with y_j.
  FrameStack magnitude(const FrameStack& s) const {
    check(s);
    FrameStack out(s.size());
    parallel_for(s.size(), workers_, [&](std::size_t j) {
      ComplexField f = s[j];
      fft_.forward(f);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = magnitude_replace(f[i], y_[j][i]);
      fft_.inverse(f);
      out[j] = std::move(f);
    });
    return out;
  }

  /// (sum_k P_k^t |d|^2)^{-1} sum_i P_i^t conj(d) s_i, zero off the covered region.
  ComplexField image(const FrameStack& s) const {
    check(s);
    FrameStack weighted(s.size());
    parallel_for(s.size(), workers_, [&](std::size_t j) {
      ComplexField p = s[j];
      for (std::size_t i = 0; i < p.size(); ++i) p[i] *= std::conj(probe_[i]);
      weighted[j] = std::move(p);
    });
    ComplexField x = back_project<Complex>(weighted, grid_, workers_);
    normalize_by_coverage(x, illumination_);
    return x;
  }

  /// s_j = d . P_j x
  FrameStack illuminate(const ComplexField& x) const {
    FrameStack out(grid_.count());
    parallel_for(grid_.count(), workers_, [&](std::size_t j) {
      ComplexField f = extract_patch(x, grid_, j);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] *= probe_[i];
      out[j] = std::move(f);
    });
    return out;
  }

  /// P_Q: nearest frames that come from a single image.
  FrameStack overlap(const FrameStack& s) const { return illuminate(image(s)); }

  /// One update of the selected variant:
  ///   sharp_plus: 2b P_Q P_a + (1 - 2b) P_a - b (P_Q - I)
  ///   sharp:      2b P_Q P_a + (1 - 2b) P_a + b (P_Q - I)
  FrameStack step(const FrameStack& s, double beta, Variant variant) const {
    const FrameStack pa = magnitude(s);
    const FrameStack pqpa = overlap(pa);
    const FrameStack pq = overlap(s);
    const double sign = variant == Variant::SharpPlus ? -1.0 : 1.0;
    FrameStack out(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      ComplexField f(s[j].rows(), s[j].cols());
      for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = 2.0 * beta * pqpa[j][i] + (1.0 - 2.0 * beta) * pa[j][i] +
               sign * beta * (pq[j][i] - s[j][i]);
      out[j] = std::move(f);
    }
    return out;
  }

 private:
  void check(const FrameStack& s) const {
    if (s.size() != grid_.count())
      throw std::invalid_argument("sharp: frame stack size does not match grid");
    for (const auto& f : s) detail::check_patch(grid_, f.rows(), f.cols(), "sharp");
  }

  AmplitudeStack y_;
  ComplexField probe_;
  ScanGrid grid_;
  CoverageMap illumination_;
  Fft2 fft_;
  std::size_t workers_;
};

inline FrameStack p_a(const FrameStack& frames, const AmplitudeStack& y, const ScanGrid& grid,
                      const ComplexField& probe, std::size_t workers = 1) {
  return Projections(y, probe, grid, workers).magnitude(frames);
}

inline FrameStack p_q(const FrameStack& frames, const ComplexField& probe, const ScanGrid& grid,
                      std::size_t workers = 1) {
  const AmplitudeStack unused(grid.count());
  return Projections(unused, probe, grid, workers).overlap(frames);
}

/// Runs the selected variant from s_j = d . P_j init and returns the normalized
/// back-projection of the final frames. Trace rows as in pmace::mann_iterate.
inline SolveResult sharp_iterate(const AmplitudeStack& y, const ComplexField& probe,
                                 const ScanGrid& grid, const Params& params,
                                 const ComplexField& init, TraceReference ref = {}) {
  params.validate();
  check_measurements(y, probe, grid, init, "sharp");
  if (ref.truth) detail::check_image(grid, ref.truth->rows(), ref.truth->cols(), "sharp");

  const Projections ops(y, probe, grid, params.workers);
  const Stopwatch clock;
  SolveResult result;
  auto record = [&](std::size_t it, const ComplexField& image) {
    result.trace.add(it, nrmse_phase_aligned(image, *ref.truth, ops.illumination().covered),
                     clock.seconds());
  };

  FrameStack s = ops.illuminate(init);
  if (ref.truth) record(0, ops.image(s));
  const std::string name = to_string(params.variant);
  for (std::size_t it = 1; it <= params.max_iters; ++it) {
    s = ops.step(s, params.beta, params.variant);
    if (!all_finite(s)) throw NumericalError(name, it);
    if (ref.truth && (it % params.eval_every == 0 || it == params.max_iters))
      record(it, ops.image(s));
  }
  result.image = ops.image(s);
  return result;
}

}  // namespace ptycho::sharp
