#include <gtest/gtest.h>

#include <sstream>

#include "ptycho/pmace.hpp"
#include "support.hpp"

using namespace ptycho;
using testing_support::desk_instance;
using testing_support::random_amplitudes;
using testing_support::random_field;
using testing_support::rel_diff;

namespace {

PatchStack random_stack(std::size_t count, std::size_t n, std::uint64_t seed) {
  PatchStack s;
  for (std::size_t j = 0; j < count; ++j) s.push_back(random_field(n, n, seed + j));
  return s;
}

/// Weighted inner product sum_j <a_j, |d|^kappa b_j>.
Complex weighted_inner(const PatchStack& a, const PatchStack& b, const RealField& w) {
  Complex s{};
  for (std::size_t j = 0; j < a.size(); ++j)
    for (std::size_t i = 0; i < w.size(); ++i) s += std::conj(a[j][i]) * w[i] * b[j][i];
  return s;
}

}  // namespace

// The regularized reciprocal of d = 1 is 1 / (1 + 1e-12), hence the 1e-12 relative slack.
TEST(Agent, ScalarClosedForm) {
  const ComplexField d(1, 1, 1.0), x(1, 1, 2.0);
  const RealField y(1, 1, 3.0);
  EXPECT_NEAR(std::abs(pmace::agent_update(x, y, d, 0.0)(0, 0) - Complex(3.0)), 0.0, 3e-12 + 1e-15);
  EXPECT_NEAR(std::abs(pmace::agent_update(x, y, d, 1.0)(0, 0) - Complex(2.5)), 0.0, 1.5e-12 + 1e-15);
}

TEST(Agent, ConsistentInputIsFixed) {
  ComplexField d = random_field(8, 8, 1);
  for (auto& v : d) v = std::polar(0.5 + 0.5 * std::abs(std::tanh(v.real())), std::arg(v));
  const ComplexField x = random_field(8, 8, 2);
  const AmplitudeStack y = forward_amplitude(x, d, ScanGrid(8, 8, 8, {{0, 0}}));
  for (double alpha : {0.0, 0.3, 5.0}) {
    const ComplexField out = pmace::agent_update(x, y[0], d, alpha);
    EXPECT_LE(testing_support::max_abs_diff(out, x), 1e-10) << alpha;
  }
}

TEST(Agent, LargeAlphaReturnsCurrentEstimate) {
  const ComplexField d = synth_probe(16, 0), x = random_field(16, 16, 3);
  const RealField y = random_amplitudes(16, 16, 4);
  const ComplexField out = pmace::agent_update(x, y, d, 1e8);
  ComplexField diff = out;
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= x[i];
  EXPECT_LT(testing_support::norm2(diff) / testing_support::norm2(x), 1e-6);
}

TEST(Agent, StepShrinksMonotonicallyWithAlpha) {
  const ComplexField d = random_field(12, 12, 5), x = random_field(12, 12, 6);
  const RealField y = random_amplitudes(12, 12, 7);
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4}) {
    ComplexField diff = pmace::agent_update(x, y, d, alpha);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= x[i];
    const double step = testing_support::norm2(diff);
    EXPECT_LE(step, prev * (1 + 1e-12)) << alpha;
    prev = step;
  }
}

TEST(Agent, ZeroSpectrumMapsToZeroDataPoint) {
  const ComplexField d(4, 4, 1.0), x(4, 4);
  const RealField y(4, 4, 1.0);
  const ComplexField out = pmace::agent_update(x, y, d, 0.0);
  for (const auto& v : out) EXPECT_EQ(v, Complex{});
}

TEST(Agent, RejectsMismatchedShapes) {
  EXPECT_THROW(pmace::agent_update(ComplexField(4, 4), RealField(3, 3), ComplexField(4, 4), 0.0),
               std::invalid_argument);
  EXPECT_THROW(pmace::agent_update(ComplexField(4, 4), RealField(4, 4), ComplexField(4, 4), -1.0),
               std::invalid_argument);
}

TEST(RegularizedReciprocal, ExactOnWellLitPixelsAndFiniteOnDark) {
  ComplexField d = synth_probe(32, 1);
  const ComplexField inv = pmace::regularized_reciprocal(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_TRUE(std::isfinite(inv[i].real()) && std::isfinite(inv[i].imag()));
    // Relative bias is eps^2 / |d|^2 with eps = 1e-6 max|d| (max|d| = 1 here).
    if (d[i] != Complex{}) {
      EXPECT_LE(std::abs(inv[i] * d[i] - 1.0), 1.0001e-12 / std::norm(d[i]) + 1e-15);
    }
    if (std::abs(d[i]) == 1.0) {
      EXPECT_LE(std::abs(inv[i] * d[i] - 1.0), 1e-12 + 1e-15);
    }
    if (d[i] == Complex{}) {
      EXPECT_EQ(inv[i], Complex{});
    }
  }
}

TEST(Consensus, TwoCoincidentPatchesAverage) {
  // Full overlap is modelled with a one-pixel-wider image whose two offsets share every
  // column except the ends; kappa = 0 and a constant probe give plain averages.
  const ComplexField probe(3, 3, 1.0);
  const ScanGrid grid(3, 3, 3, {{0, 0}});
  const CoverageMap cov = build_coverage(probe, grid, 0.0);
  const PatchStack a{random_field(3, 3, 1)};
  const PatchStack out = pmace::consensus(a, probe, grid, cov);
  EXPECT_LE(testing_support::max_abs_diff(out[0], a[0]), 1e-15);

  const ScanGrid two(3, 4, 3, {{0, 0}, {0, 1}});
  const CoverageMap cov2 = build_coverage(probe, two, 0.0);
  const PatchStack s{random_field(3, 3, 2), random_field(3, 3, 3)};
  const PatchStack g = pmace::consensus(s, probe, two, cov2);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 1; c < 3; ++c) {
      const Complex avg = 0.5 * (s[0](r, c) + s[1](r, c - 1));
      EXPECT_NEAR(std::abs(g[0](r, c) - avg), 0.0, 1e-15);
      EXPECT_NEAR(std::abs(g[1](r, c - 1) - avg), 0.0, 1e-15);
    }
}

TEST(Consensus, ConsistentStackWithFlatProbeIsUnchanged) {
  const ScanGrid grid = make_scan_grid(40, 40, 16, {3, 3, 10});
  const ComplexField probe(16, 16, Complex{0.7, 0.2});
  const CoverageMap cov = build_coverage(probe, grid, 1.25);
  const PatchStack s = pmace::extract_all(random_field(40, 40, 4), grid, 1);
  EXPECT_LT(rel_diff(pmace::consensus(s, probe, grid, cov), s), 1e-14);
}

TEST(Consensus, IdempotentAndWeightedSelfAdjoint) {
  const ScanGrid grid = make_scan_grid(48, 48, 16, {4, 4, 9});
  const ComplexField probe = synth_probe(16, 2);
  for (double kappa : {0.0, 1.0, 1.25, 2.0}) {
    const CoverageMap cov = build_coverage(probe, grid, kappa);
    const RealField w = amplitude_power(probe, kappa);
    const PatchStack s = random_stack(grid.count(), 16, 100);
    const PatchStack t = random_stack(grid.count(), 16, 200);
    const PatchStack gs = pmace::consensus(s, probe, grid, cov);
    const PatchStack gt = pmace::consensus(t, probe, grid, cov);
    EXPECT_LT(rel_diff(pmace::consensus(gs, probe, grid, cov), gs), 1e-12) << kappa;
    const Complex lhs = weighted_inner(gs, t, w), rhs = weighted_inner(s, gt, w);
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs)) << kappa;
  }
}

TEST(Consensus, OutputPatchesAgreeOnOverlaps) {
  const ScanGrid grid = make_scan_grid(48, 48, 16, {4, 4, 9});
  const ComplexField probe = synth_probe(16, 2);
  const CoverageMap cov = build_coverage(probe, grid, 1.25);
  const PatchStack g = pmace::consensus(random_stack(grid.count(), 16, 9), probe, grid, cov);
  ComplexField image(48, 48);
  std::vector<int> seen(48 * 48, 0);
  for (std::size_t j = 0; j < grid.count(); ++j) {
    const Offset o = grid.offsets()[j];
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) {
        const std::size_t p = (o.row + r) * 48 + o.col + c;
        if (seen[p]) {
          EXPECT_EQ(image[p], g[j](r, c));
        } else {
          image[p] = g[j](r, c);
          seen[p] = 1;
        }
      }
  }
}

TEST(Pmace, GroundTruthIsFixedPointOfTForNowhereZeroProbe) {
  auto inst = desk_instance();
  for (auto& v : inst.probe) v = std::polar(std::max(std::abs(v), 0.2), std::arg(v));
  const AmplitudeStack y = forward_amplitude(inst.truth, inst.probe, inst.grid);
  const PatchStack x = pmace::extract_all(inst.truth, inst.grid, 1);
  for (double alpha : {0.0, 0.4}) {
    const pmace::Operators ops(y, inst.probe, inst.grid, alpha, 1.25);
    EXPECT_LT(rel_diff(ops.fixed_point_map(x), x), 1e-10) << alpha;
  }
}

// With a dark probe exterior the agents map unlit pixels to zero, so the ground-truth stack is
// a fixed point of T only on the probe support, which is all the reconstruction reads.
TEST(Pmace, GroundTruthIsFixedPointOfTOnProbeSupport) {
  const auto inst = desk_instance();
  const pmace::Operators ops(inst.clean, inst.probe, inst.grid, 0.0, 1.25);
  const PatchStack x = ops.project(inst.truth);
  PatchStack tx = ops.fixed_point_map(x), xs = x;
  for (std::size_t j = 0; j < x.size(); ++j)
    for (std::size_t i = 0; i < inst.probe.size(); ++i)
      if (inst.probe[i] == Complex{}) tx[j][i] = xs[j][i] = Complex{};
  EXPECT_LT(rel_diff(tx, xs), 1e-10);
}

TEST(Pmace, GroundTruthInitStaysPut) {
  const auto inst = desk_instance();
  pmace::Params p;
  p.max_iters = 20;
  p.eval_every = 1;
  const SolveResult r = pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, inst.truth, {&inst.truth});
  ASSERT_EQ(r.trace.size(), 21u);
  for (const auto& row : r.trace.rows()) EXPECT_LT(row.nrmse, 1e-10) << row.iteration;
}

TEST(Pmace, ErrorDecreasesEarlyOnNoiseFreeData) {
  const auto inst = desk_instance();
  pmace::Params p;
  p.max_iters = 50;
  p.eval_every = 1;
  const ComplexField init = initial_image(176, 176, InitMode::Ones);
  const SolveResult r = pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, init, {&inst.truth});
  const auto& rows = r.trace.rows();
  EXPECT_LT(rows[50].nrmse, rows[10].nrmse);
  EXPECT_LT(rows[10].nrmse, rows[1].nrmse);
}

TEST(Pmace, TraceScheduleAndDeterminism) {
  const auto inst = desk_instance();
  pmace::Params p;
  p.max_iters = 25;
  p.eval_every = 10;
  const ComplexField init = initial_image(176, 176, InitMode::Ones);
  p.workers = 1;
  const SolveResult a = pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, init, {&inst.truth});
  p.workers = 8;
  const SolveResult b = pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, init, {&inst.truth});
  std::vector<std::size_t> its;
  for (const auto& row : a.trace.rows()) its.push_back(row.iteration);
  EXPECT_EQ(its, (std::vector<std::size_t>{0, 10, 20, 25}));
  EXPECT_TRUE(a.image == b.image);
  std::ostringstream ca, cb;
  a.trace.write_csv(ca, false);
  b.trace.write_csv(cb, false);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(Pmace, UncoveredPixelsAreZero) {
  const auto inst = desk_instance();
  pmace::Params p;
  p.max_iters = 3;
  const SolveResult r =
      pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, initial_image(176, 176, InitMode::Ones));
  const CoverageMap cov = build_coverage(inst.probe, inst.grid, 1.25);
  for (std::size_t i = 0; i < r.image.size(); ++i)
    if (!cov.covered[i]) {
      EXPECT_EQ(r.image[i], Complex{});
    }
  EXPECT_EQ(r.trace.size(), 0u);
}

TEST(Pmace, InvalidParamsAndShapesThrow) {
  const auto inst = desk_instance();
  const ComplexField init = initial_image(176, 176, InitMode::Ones);
  pmace::Params p;
  p.rho = 1.0;
  EXPECT_THROW(pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, init), std::invalid_argument);
  p = {};
  p.kappa = -0.5;
  EXPECT_THROW(pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, init), std::invalid_argument);
  p = {};
  EXPECT_THROW(pmace::mann_iterate(inst.clean, inst.probe, inst.grid, p, ComplexField(100, 100)),
               std::invalid_argument);
  AmplitudeStack short_y(inst.clean.begin(), inst.clean.end() - 1);
  EXPECT_THROW(pmace::mann_iterate(short_y, inst.probe, inst.grid, p, init), std::invalid_argument);
}

TEST(Pmace, NonFiniteIterateIsReported) {
  const auto inst = desk_instance();
  AmplitudeStack y = inst.clean;
  y[3](5, 5) = std::numeric_limits<double>::quiet_NaN();
  pmace::Params p;
  p.max_iters = 5;
  try {
    pmace::mann_iterate(y, inst.probe, inst.grid, p, initial_image(176, 176, InitMode::Ones));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.iteration(), 1u);
  }
}
