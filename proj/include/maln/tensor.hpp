#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace maln {

/// Storage precision. Values are always held as double in memory; F32
/// tensors are narrowed on construction so they survive a write/read cycle.
enum class DType : std::uint8_t { F32 = 0x01, F64 = 0x02 };

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Dense, row-major, immutable array of reals.
///
/// Every entry is finite or exactly kLogZero. NaN and +inf are rejected at
/// construction with InputError, so downstream kernels never see them.
class Tensor {
 public:
  /// A rank-1 tensor holding a single 0.0.
  Tensor();
  Tensor(std::vector<std::size_t> dims, std::vector<double> data, DType dtype = DType::F64);

  static Tensor filled(std::vector<std::size_t> dims, double value, DType dtype = DType::F64);
  /// Rank-2 convenience for tests and small literals.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  DType dtype() const noexcept { return dtype_; }

  std::span<const double> values() const noexcept { return data_; }
  double operator[](std::size_t flat) const { return data_[flat]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

  /// Row i of a rank-2 tensor.
  std::span<const double> row(std::size_t i) const;

  /// Moves the payload out, leaving this tensor in the default state.
  std::vector<double> release() &&;

  /// Bitwise comparison: dims, dtype and every payload bit.
  bool identical(const Tensor& other) const noexcept;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
  DType dtype_ = DType::F64;
};

/// Log-sum-exp with max subtraction. Exact kLogZero when every input is
/// kLogZero. Throws InputError("empty reduction") on an empty span.
double logsumexp(std::span<const double> values);

/// Two-argument log-domain addition; kLogZero is the identity.
inline double log_add(double a, double b) noexcept {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// Tensor file format, little-endian:
//   "MALN" | version u8 = 1 | dtype u8 | rank u8 | rank x u64 dims | payload
inline constexpr std::size_t kHeaderFixedBytes = 7;
inline constexpr std::uint8_t kFormatVersion = 0x01;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws FormatError (with byte offset) on any malformed input.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, std::ostream& out);
Tensor read_tensor(std::istream& in);

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace maln

