#pragma once

// CFLD binary complex-field files:
//   "CFLD" | u32 version = 1 | u64 rows | u64 cols | rows*cols x (f64 re, f64 im)
// All integers and floats little-endian, samples row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ptycho/field.hpp"

namespace ptycho {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cfld {

inline constexpr std::array<char, 4> kMagic{'C', 'F', 'L', 'D'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {
template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}
template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("CFLD: truncated stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}
}  // namespace detail

inline void write(std::ostream& os, const ComplexField& f) {
  os.write(kMagic.data(), kMagic.size());
  detail::put_le<std::uint32_t>(os, kVersion);
  detail::put_le<std::uint64_t>(os, f.rows());
  detail::put_le<std::uint64_t>(os, f.cols());
  for (const Complex& z : f) {
    detail::put_le(os, std::bit_cast<std::uint64_t>(z.real()));
    detail::put_le(os, std::bit_cast<std::uint64_t>(z.imag()));
  }
  if (!os) throw IoError("CFLD: write failed");
}

inline ComplexField read(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw IoError("CFLD: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kVersion) throw IoError("CFLD: unsupported version " + std::to_string(version));
  const auto rows = detail::get_le<std::uint64_t>(is);
  const auto cols = detail::get_le<std::uint64_t>(is);
  if (rows != 0 && cols > (std::uint64_t{1} << 40) / rows) throw IoError("CFLD: implausible size");
  std::vector<Complex> data(rows * cols);
  for (auto& z : data) {
    const double re = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    const double im = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    z = {re, im};
  }
  return ComplexField(rows, cols, std::move(data));
}

inline void save(const std::filesystem::path& path, const ComplexField& f) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write(os, f);
}

inline ComplexField load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void save(const std::filesystem::path& path, const RealField& f) {
  ComplexField c(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.size(); ++i) c[i] = f[i];
  save(path, c);
}

}  // namespace cfld
}  // namespace ptycho
