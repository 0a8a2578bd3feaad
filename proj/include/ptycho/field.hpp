#pragma once

// Complex/real 2D field containers, scan geometry and patch projection.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptycho/parallel.hpp"

namespace ptycho {

using Complex = std::complex<double>;

/// Dense row-major 2D array.
template <typename T>
class Field {
 public:
  using value_type = T;

  Field() = default;
  Field(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Field(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("Field: data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const Field& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  template <typename U>
  bool same_shape(const Field<U>& o) const noexcept {
    return rows_ == o.rows() && cols_ == o.cols();
  }

  friend bool operator==(const Field& a, const Field& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using ComplexField = Field<Complex>;
using RealField = Field<double>;
using MaskField = Field<unsigned char>;

template <typename T>
bool all_finite(const Field<T>& f) {
  for (const auto& v : f) {
    if constexpr (std::is_same_v<T, Complex>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    } else {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
  }
  return true;
}

inline void require_same_shape(const ComplexField& a, const ComplexField& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

/// Pointwise |d|^kappa, with 0 wherever d == 0 (including kappa == 0).
inline RealField amplitude_power(const ComplexField& d, double kappa) {
  RealField out(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double a = std::abs(d[i]);
    out[i] = a == 0.0 ? 0.0 : std::pow(a, kappa);
  }
  return out;
}

struct Offset {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Ordered patch positions (top-left corners) of an Np x Np probe over an image.
class ScanGrid {
 public:
  ScanGrid(std::size_t image_rows, std::size_t image_cols, std::size_t patch_size,
           std::vector<Offset> offsets)
      : image_rows_(image_rows),
        image_cols_(image_cols),
        patch_size_(patch_size),
        offsets_(std::move(offsets)) {
    if (offsets_.empty()) throw std::invalid_argument("ScanGrid: at least one offset required");
    if (patch_size_ == 0) throw std::invalid_argument("ScanGrid: patch size must be positive");
    for (std::size_t j = 0; j < offsets_.size(); ++j) {
      const auto& o = offsets_[j];
      if (o.row + patch_size_ > image_rows_ || o.col + patch_size_ > image_cols_)
        throw std::invalid_argument("ScanGrid: patch " + std::to_string(j) + " at (" +
                                    std::to_string(o.row) + "," + std::to_string(o.col) +
                                    ") extends past the image bounds");
      for (std::size_t k = 0; k < j; ++k)
        if (offsets_[k] == o)
          throw std::invalid_argument("ScanGrid: duplicate offset at index " + std::to_string(j));
    }
  }

  std::size_t image_rows() const noexcept { return image_rows_; }
  std::size_t image_cols() const noexcept { return image_cols_; }
  std::size_t patch_size() const noexcept { return patch_size_; }
  std::size_t count() const noexcept { return offsets_.size(); }
  const std::vector<Offset>& offsets() const noexcept { return offsets_; }
  const Offset& operator[](std::size_t j) const {
    if (j >= offsets_.size())
      throw std::out_of_range("ScanGrid: index " + std::to_string(j) + " out of range (J=" +
                              std::to_string(offsets_.size()) + ")");
    return offsets_[j];
  }

  friend bool operator==(const ScanGrid&, const ScanGrid&) = default;

 private:
  std::size_t image_rows_;
  std::size_t image_cols_;
  std::size_t patch_size_;
  std::vector<Offset> offsets_;
};

namespace detail {
inline void check_image(const ScanGrid& grid, std::size_t rows, std::size_t cols, const char* what) {
  if (rows != grid.image_rows() || cols != grid.image_cols())
    throw std::invalid_argument(std::string(what) + ": image is " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " but grid expects " +
                                std::to_string(grid.image_rows()) + "x" +
                                std::to_string(grid.image_cols()));
}
inline void check_patch(const ScanGrid& grid, std::size_t rows, std::size_t cols, const char* what) {
  if (rows != grid.patch_size() || cols != grid.patch_size())
    throw std::invalid_argument(std::string(what) + ": patch is " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " but grid patch size is " +
                                std::to_string(grid.patch_size()));
}
inline void check_index(const ScanGrid& grid, std::size_t j) {
  if (j >= grid.count())
    throw std::invalid_argument("patch index " + std::to_string(j) + " out of range (J=" +
                                std::to_string(grid.count()) + ")");
}
}  // namespace detail

/// P_j: copy of the patch at offsets[j].
template <typename T>
Field<T> extract_patch(const Field<T>& image, const ScanGrid& grid, std::size_t j) {
  detail::check_index(grid, j);
  detail::check_image(grid, image.rows(), image.cols(), "extract_patch");
  const std::size_t n = grid.patch_size();
  const Offset o = grid.offsets()[j];
  Field<T> out(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    auto src = image.row(o.row + r).subspan(o.col, n);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

/// P_j^t: in-place scatter-add of a patch into the image at offsets[j].
template <typename T>
void accumulate_patch_into(Field<T>& target, const Field<T>& patch, const ScanGrid& grid,
                           std::size_t j) {
  detail::check_index(grid, j);
  detail::check_image(grid, target.rows(), target.cols(), "accumulate_patch");
  detail::check_patch(grid, patch.rows(), patch.cols(), "accumulate_patch");
  const std::size_t n = grid.patch_size();
  const Offset o = grid.offsets()[j];
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = target.row(o.row + r).subspan(o.col, n);
    auto src = patch.row(r);
    for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
  }
}

template <typename T>
Field<T> accumulate_patch(Field<T> target, const Field<T>& patch, const ScanGrid& grid,
                          std::size_t j) {
  accumulate_patch_into(target, patch, grid, j);
  return target;
}

/// Sum_j P_j^t patches[j]. Every pixel receives its contributions in increasing j order,
/// so the result does not depend on the worker count. Work is split over image rows.
template <typename T>
Field<T> back_project(std::span<const Field<T>> patches, const ScanGrid& grid,
                      std::size_t workers = 1) {
  if (patches.size() != grid.count())
    throw std::invalid_argument("back_project: " + std::to_string(patches.size()) +
                                " patches for a grid of " + std::to_string(grid.count()));
  for (const auto& p : patches) detail::check_patch(grid, p.rows(), p.cols(), "back_project");
  const std::size_t n = grid.patch_size();
  Field<T> image(grid.image_rows(), grid.image_cols());
  parallel_for_blocks(grid.image_rows(), workers, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t j = 0; j < grid.count(); ++j) {
      const Offset o = grid.offsets()[j];
      const std::size_t lo = std::max(r0, o.row);
      const std::size_t hi = std::min(r1, o.row + n);
      for (std::size_t r = lo; r < hi; ++r) {
        auto dst = image.row(r).subspan(o.col, n);
        auto src = patches[j].row(r - o.row);
        for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
      }
    }
  });
  return image;
}

/// Diagonal of Lambda = sum_j P_j^t |d|^kappa and the region where it is nonzero.
struct CoverageMap {
  RealField weights;
  MaskField covered;
  double kappa = 1.0;

  std::size_t covered_count() const {
    return static_cast<std::size_t>(std::count(covered.begin(), covered.end(), 1));
  }
};

inline CoverageMap build_coverage(const ComplexField& probe, const ScanGrid& grid, double kappa) {
  if (!(kappa >= 0.0)) throw std::invalid_argument("build_coverage: kappa must be >= 0");
  detail::check_patch(grid, probe.rows(), probe.cols(), "build_coverage");
  const RealField w = amplitude_power(probe, kappa);
  std::vector<RealField> copies(grid.count(), w);
  CoverageMap cov;
  cov.kappa = kappa;
  cov.weights = back_project<double>(copies, grid);
  cov.covered = MaskField(grid.image_rows(), grid.image_cols());
  for (std::size_t i = 0; i < cov.weights.size(); ++i)
    cov.covered[i] = cov.weights[i] > 0.0 ? 1 : 0;
  return cov;
}

/// Lambda^{-1} applied on the covered region; uncovered pixels become 0.
inline void normalize_by_coverage(ComplexField& image, const CoverageMap& cov) {
  for (std::size_t i = 0; i < image.size(); ++i)
    image[i] = cov.covered[i] ? image[i] / cov.weights[i] : Complex{};
}

}  // namespace ptycho
