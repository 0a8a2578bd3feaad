#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptycho/field.hpp"

namespace ptycho {

/// Optimal global phase theta* = arg(sum xhat . conj(x)) over the mask; 0 when the sum vanishes.
inline double optimal_phase(const ComplexField& xhat, const ComplexField& x, const MaskField& mask) {
  Complex acc{};
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i]) acc += xhat[i] * std::conj(x[i]);
  return acc == Complex{} ? 0.0 : std::arg(acc);
}

/// ||xhat - e^{i theta} x|| / ||x|| over the mask, for a given theta.
inline double nrmse_at_phase(const ComplexField& xhat, const ComplexField& x, const MaskField& mask,
                             double theta) {
  const Complex rot = std::polar(1.0, theta);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    num += std::norm(xhat[i] - rot * x[i]);
    den += std::norm(x[i]);
  }
  if (!(den > 0.0)) throw std::invalid_argument("nrmse: reference is zero on the mask");
  return std::sqrt(num / den);
}

/// Phase-aligned NRMSE: min over theta of ||xhat - e^{i theta} x|| / ||x|| on the mask.
inline double nrmse_phase_aligned(const ComplexField& xhat, const ComplexField& x,
                                  const MaskField& mask) {
  require_same_shape(xhat, x, "nrmse_phase_aligned");
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw std::invalid_argument("nrmse_phase_aligned: mask shape mismatch");
  return nrmse_at_phase(xhat, x, mask, optimal_phase(xhat, x, mask));
}

inline double nrmse_phase_aligned(const ComplexField& xhat, const ComplexField& x) {
  return nrmse_phase_aligned(xhat, x, MaskField(x.rows(), x.cols(), 1));
}

struct TraceRow {
  std::size_t iteration = 0;
  double nrmse = 0.0;
  double seconds = 0.0;
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// NRMSE-vs-iteration record; iterations strictly increasing.
class ConvergenceTrace {
 public:
  void add(std::size_t iteration, double nrmse, double seconds) {
    if (!rows_.empty() && iteration <= rows_.back().iteration)
      throw std::invalid_argument("ConvergenceTrace: iterations must be strictly increasing");
    if (!(nrmse >= 0.0)) throw std::invalid_argument("ConvergenceTrace: nrmse must be >= 0");
    rows_.push_back({iteration, nrmse, seconds});
  }

  const std::vector<TraceRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t size() const noexcept { return rows_.size(); }
  const TraceRow& back() const { return rows_.back(); }

  /// First recorded iteration whose NRMSE is at or below `target`, or -1.
  long first_reaching(double target) const {
    for (const auto& r : rows_)
      if (r.nrmse <= target) return static_cast<long>(r.iteration);
    return -1;
  }

  /// CSV with header "iter,nrmse,seconds", LF line endings, round-trip precision.
  void write_csv(std::ostream& os, bool with_timing = true) const {
    os << "iter,nrmse,seconds\n";
    char buf[96];
    for (const auto& r : rows_) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.6f\n", r.iteration, r.nrmse,
                    with_timing ? r.seconds : 0.0);
      os << buf;
    }
  }

  void save_csv(const std::filesystem::path& path, bool with_timing = true) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(os, with_timing);
  }

 private:
  std::vector<TraceRow> rows_;
};

}  // namespace ptycho
