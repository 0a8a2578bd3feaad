#pragma once

// Unitary 2D discrete Fourier transform.
//
// Power-of-two lengths use an iterative radix-2 transform; other lengths go through
// Bluestein's chirp-z algorithm on a padded power-of-two length. Plans are immutable
// and cached per length, so they can be shared across worker threads.

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "ptycho/field.hpp"

namespace ptycho {

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n_ == 0) throw std::invalid_argument("FftPlan: length must be positive");
    if (is_pow2(n_)) {
      init_radix2(n_, bitrev_, twiddle_);
    } else {
      m_ = 1;
      while (m_ < 2 * n_ - 1) m_ <<= 1;
      init_radix2(m_, bitrev_, twiddle_);
      // chirp[k] = exp(-i pi k^2 / n); k^2 reduced mod 2n to keep the angle small.
      chirp_.resize(n_);
      for (std::size_t k = 0; k < n_; ++k) {
        const std::size_t k2 = (k * k) % (2 * n_);
        const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
        chirp_[k] = {std::cos(ang), std::sin(ang)};
      }
      kernel_.assign(m_, Complex{});
      kernel_[0] = std::conj(chirp_[0]);
      for (std::size_t k = 1; k < n_; ++k) kernel_[k] = kernel_[m_ - k] = std::conj(chirp_[k]);
      radix2(kernel_, false);
    }
  }

  std::size_t size() const noexcept { return n_; }

  /// Unnormalized in-place transform; `inverse` uses the +i sign.
  void execute(std::span<Complex> x, bool inverse, std::vector<Complex>& scratch) const {
    if (m_ == 0) {
      radix2(x, inverse);
      return;
    }
    // Inverse DFT via conj(DFT(conj(x))).
    scratch.assign(m_, Complex{});
    for (std::size_t k = 0; k < n_; ++k)
      scratch[k] = (inverse ? std::conj(x[k]) : x[k]) * chirp_[k];
    radix2(scratch, false);
    for (std::size_t k = 0; k < m_; ++k) scratch[k] *= kernel_[k];
    radix2(scratch, true);
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < n_; ++k) {
      const Complex v = scratch[k] * inv_m * chirp_[k];
      x[k] = inverse ? std::conj(v) : v;
    }
  }

  static std::shared_ptr<const FftPlan> cached(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::shared_ptr<const FftPlan>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_shared<const FftPlan>(n);
    return slot;
  }

 private:
  static bool is_pow2(std::size_t n) { return (n & (n - 1)) == 0; }

  static void init_radix2(std::size_t n, std::vector<std::size_t>& bitrev,
                          std::vector<Complex>& twiddle) {
    bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev[i] = r;
    }
    twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = {std::cos(ang), std::sin(ang)};
    }
  }

  void radix2(std::span<Complex> x, bool inverse) const {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i)
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2, step = n / len;
      for (std::size_t s = 0; s < n; s += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const Complex w = inverse ? std::conj(twiddle_[k * step]) : twiddle_[k * step];
          const Complex t = w * x[s + k + half];
          x[s + k + half] = x[s + k] - t;
          x[s + k] += t;
        }
      }
    }
  }
  void radix2(std::vector<Complex>& x, bool inverse) const { radix2(std::span<Complex>(x), inverse); }

  std::size_t n_;
  std::size_t m_ = 0;  // padded length for Bluestein, 0 for radix-2
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddle_;
  std::vector<Complex> chirp_;
  std::vector<Complex> kernel_;
};

/// Row/column plans for one field shape. Cheap to copy.
class Fft2 {
 public:
  Fft2(std::size_t rows, std::size_t cols)
      : rows_(rows),
        cols_(cols),
        row_plan_(FftPlan::cached(cols)),
        col_plan_(FftPlan::cached(rows)),
        scale_(1.0 / std::sqrt(static_cast<double>(rows * cols))) {}

  void forward(ComplexField& f) const { run(f, false); }
  void inverse(ComplexField& f) const { run(f, true); }

 private:
  void run(ComplexField& f, bool inverse) const {
    if (f.rows() != rows_ || f.cols() != cols_)
      throw std::invalid_argument("Fft2: field shape does not match plan");
    std::vector<Complex> scratch;
    for (std::size_t r = 0; r < rows_; ++r) row_plan_->execute(f.row(r), inverse, scratch);
    std::vector<Complex> col(rows_);
    for (std::size_t c = 0; c < cols_; ++c) {
      for (std::size_t r = 0; r < rows_; ++r) col[r] = f(r, c);
      col_plan_->execute(col, inverse, scratch);
      for (std::size_t r = 0; r < rows_; ++r) f(r, c) = col[r] * scale_;
    }
  }

  std::size_t rows_, cols_;
  std::shared_ptr<const FftPlan> row_plan_, col_plan_;
  double scale_;
};

inline ComplexField fft2_orthonormal(ComplexField f) {
  if (f.empty()) return f;
  Fft2(f.rows(), f.cols()).forward(f);
  return f;
}

inline ComplexField ifft2_orthonormal(ComplexField f) {
  if (f.empty()) return f;
  Fft2(f.rows(), f.cols()).inverse(f);
  return f;
}

}  // namespace ptycho
