#pragma once

// PMACE: probe-weighted proximal agents F_j, probe-exponent consensus G, and the
// Mann iteration for the fixed point of T = (2G - I)(2F - I).

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/metrics.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/solver.hpp"

namespace ptycho::pmace {

struct Params {
  double alpha = 0.0;   // noise-to-signal ratio
  double rho = 0.5;     // Mann averaging
  double kappa = 1.25;  // probe exponent of the consensus weights
  std::size_t max_iters = 100;
  std::size_t eval_every = 10;
  std::size_t workers = 1;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("pmace: alpha must be >= 0");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("pmace: rho must lie in (0, 1)");
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("pmace: kappa must be >= 0");
    if (eval_every == 0) throw std::invalid_argument("pmace: eval_every must be positive");
  }
};

/// conj(d) / (|d|^2 + eps^2), eps = 1e-6 max|d|.
inline ComplexField regularized_reciprocal(const ComplexField& d) {
  double peak = 0.0;
  for (const auto& v : d) peak = std::max(peak, std::abs(v));
  const double eps2 = (1e-6 * peak) * (1e-6 * peak);
  ComplexField inv(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double den = std::norm(d[i]) + eps2;
    inv[i] = den > 0.0 ? std::conj(d[i]) / den : Complex{};
  }
  return inv;
}

inline PatchStack extract_all(const ComplexField& image, const ScanGrid& grid, std::size_t workers) {
  PatchStack out(grid.count());
  parallel_for(grid.count(), workers, [&](std::size_t j) { out[j] = extract_patch(image, grid, j); });
  return out;
}

/// Lambda^{-1} sum_i P_i^t (weight . s_i), zero off the covered region.
inline ComplexField weighted_average_image(const PatchStack& s, const RealField& weight,
                                           const ScanGrid& grid, const CoverageMap& coverage,
                                           std::size_t workers) {
  if (s.size() != grid.count()) throw std::invalid_argument("pmace: stack size does not match grid");
  PatchStack weighted(s.size());
  parallel_for(s.size(), workers, [&](std::size_t j) {
    ComplexField p = s[j];
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= weight[i];
    weighted[j] = std::move(p);
  });
  ComplexField image = back_project<Complex>(weighted, grid, workers);
  normalize_by_coverage(image, coverage);
  return image;
}

/// The stacked operators for one problem instance. Holds read-only state shared by workers.
class Operators {
 public:
  Operators(const AmplitudeStack& y, const ComplexField& probe, const ScanGrid& grid, double alpha,
            double kappa, std::size_t workers = 1)
      : y_(y),
        probe_(probe),
        probe_inv_(regularized_reciprocal(probe)),
        weight_(amplitude_power(probe, kappa)),
        grid_(grid),
        coverage_(build_coverage(probe, grid, kappa)),
        fft_(grid.patch_size(), grid.patch_size()),
        alpha_(alpha),
        workers_(workers) {
    if (y_.size() != grid_.count())
      throw std::invalid_argument("pmace: amplitude stack size does not match grid");
  }

  const CoverageMap& coverage() const noexcept { return coverage_; }
  const ScanGrid& grid() const noexcept { return grid_; }

  /// F_j(x_j) = (alpha x_j + D^{-1} F*(y_j F D x_j / |F D x_j|)) / (1 + alpha)
  ComplexField agent(const ComplexField& xj, std::size_t j) const {
    ComplexField w(xj.rows(), xj.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = probe_[i] * xj[i];
    fft_.forward(w);
    const RealField& yj = y_[j];
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = magnitude_replace(w[i], yj[i]);
    fft_.inverse(w);
    const double inv = 1.0 / (1.0 + alpha_);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (alpha_ * xj[i] + probe_inv_[i] * w[i]) * inv;
    return w;
  }

  PatchStack agents(const PatchStack& v) const {
    PatchStack out(v.size());
    parallel_for(v.size(), workers_, [&](std::size_t j) { out[j] = agent(v[j], j); });
    return out;
  }

  /// Lambda^{-1} sum_i P_i^t |d|^kappa x_i, zero off the covered region.
  ComplexField assemble(const PatchStack& s) const {
    return weighted_average_image(s, weight_, grid_, coverage_, workers_);
  }

  PatchStack project(const ComplexField& image) const { return extract_all(image, grid_, workers_); }

  /// G: weighted average of overlapping patches, redistributed to every patch.
  PatchStack consensus(const PatchStack& s) const { return project(assemble(s)); }

  /// T = (2G - I)(2F - I)
  PatchStack fixed_point_map(const PatchStack& x) const {
    PatchStack r = agents(x);
    for (std::size_t j = 0; j < r.size(); ++j)
      for (std::size_t i = 0; i < r[j].size(); ++i) r[j][i] = 2.0 * r[j][i] - x[j][i];
    PatchStack g = consensus(r);
    for (std::size_t j = 0; j < g.size(); ++j)
      for (std::size_t i = 0; i < g[j].size(); ++i) g[j][i] = 2.0 * g[j][i] - r[j][i];
    return g;
  }

 private:
  AmplitudeStack y_;
  ComplexField probe_;
  ComplexField probe_inv_;
  RealField weight_;
  ScanGrid grid_;
  CoverageMap coverage_;
  Fft2 fft_;
  double alpha_;
  std::size_t workers_;
};

/// Single-patch agent update (J = 1 convenience wrapper).
inline ComplexField agent_update(const ComplexField& xj, const RealField& yj,
                                 const ComplexField& probe, double alpha) {
  require_same_shape(xj, probe, "agent_update");
  if (yj.rows() != xj.rows() || yj.cols() != xj.cols())
    throw std::invalid_argument("agent_update: amplitude shape mismatch");
  if (!(alpha >= 0.0)) throw std::invalid_argument("agent_update: alpha must be >= 0");
  if (xj.rows() != xj.cols()) throw std::invalid_argument("agent_update: patch must be square");
  const ScanGrid single(xj.rows(), xj.cols(), xj.rows(), {Offset{0, 0}});
  const AmplitudeStack y{yj};
  return Operators(y, probe, single, alpha, 1.0).agent(xj, 0);
}

/// G for a stack, using a coverage map built with the same grid and kappa.
inline PatchStack consensus(const PatchStack& stack, const ComplexField& probe,
                            const ScanGrid& grid, const CoverageMap& coverage,
                            std::size_t workers = 1) {
  const RealField weight = amplitude_power(probe, coverage.kappa);
  return extract_all(weighted_average_image(stack, weight, grid, coverage, workers), grid, workers);
}

/// Mann iteration:  w <- F(v);  z <- G(2w - v);  v <- v + 2 rho (z - w),
/// starting from v_j = P_j init. Returns Lambda^{-1} sum_j P_j^t |d|^kappa v_j.
/// The trace holds iteration 0 and every eval_every-th iteration (plus the last one)
/// when a reference image is supplied.
inline SolveResult mann_iterate(const AmplitudeStack& y, const ComplexField& probe,
                                const ScanGrid& grid, const Params& params,
                                const ComplexField& init, TraceReference ref = {}) {
  params.validate();
  check_measurements(y, probe, grid, init, "pmace");
  if (ref.truth) detail::check_image(grid, ref.truth->rows(), ref.truth->cols(), "pmace");

  const Operators ops(y, probe, grid, params.alpha, params.kappa, params.workers);
  const Stopwatch clock;
  SolveResult result;
  auto record = [&](std::size_t it, const ComplexField& image) {
    if (ref.truth)
      result.trace.add(it, nrmse_phase_aligned(image, *ref.truth, ops.coverage().covered),
                       clock.seconds());
  };

  PatchStack v = ops.project(init);
  if (ref.truth) record(0, ops.assemble(v));

  const double step = 2.0 * params.rho;
  for (std::size_t it = 1; it <= params.max_iters; ++it) {
    const PatchStack w = ops.agents(v);
    PatchStack reflected(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      reflected[j] = w[j];
      for (std::size_t i = 0; i < w[j].size(); ++i) reflected[j][i] = 2.0 * w[j][i] - v[j][i];
    }
    const PatchStack z = ops.consensus(reflected);
    for (std::size_t j = 0; j < v.size(); ++j)
      for (std::size_t i = 0; i < v[j].size(); ++i) v[j][i] += step * (z[j][i] - w[j][i]);
    if (!all_finite(v)) throw NumericalError("pmace", it);
    if (ref.truth && (it % params.eval_every == 0 || it == params.max_iters))
      record(it, ops.assemble(v));
  }
  result.image = ops.assemble(v);
  return result;
}

}  // namespace ptycho::pmace
