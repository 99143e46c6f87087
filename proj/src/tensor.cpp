#include "maln/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "maln/errors.hpp"

namespace maln {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'A', 'L', 'N'};

bool storable(double v) noexcept { return std::isfinite(v) || v == kLogZero; }

std::size_t element_count(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor dims must be positive");
    if (n > std::numeric_limits<std::size_t>::max() / d) throw ShapeError("tensor dims overflow");
    n *= d;
  }
  return n;
}

std::size_t element_bytes(DType t) { return t == DType::F32 ? 4 : 8; }

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

Tensor::Tensor() : dims_{1}, data_{0.0} {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data, DType dtype)
    : dims_(std::move(dims)), data_(std::move(data)), dtype_(dtype) {
  if (dtype_ != DType::F32 && dtype_ != DType::F64) throw InputError("unknown dtype");
  if (element_count(dims_) != data_.size()) {
    throw ShapeError("tensor payload has " + std::to_string(data_.size()) +
                     " values but dims require " + std::to_string(element_count(dims_)));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!storable(data_[i])) {
      throw InputError("non-finite value (NaN or +inf) at flat index " + std::to_string(i));
    }
  }
  if (dtype_ == DType::F32) {
    for (double& v : data_) {
      v = static_cast<double>(static_cast<float>(v));
      // Finite doubles beyond float range would narrow to +-inf.
      if (!storable(v)) throw InputError("value out of f32 range");
    }
  }
}

Tensor Tensor::filled(std::vector<std::size_t> dims, double value, DType dtype) {
  const std::size_t n = element_count(dims);
  return Tensor(std::move(dims), std::vector<double>(n, value), dtype);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("matrix literal needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::span<const double> Tensor::row(std::size_t i) const {
  if (rank() != 2) throw ShapeError("row() needs a rank-2 tensor");
  if (i >= dims_[0]) throw ShapeError("row index out of range");
  return std::span<const double>(data_).subspan(i * dims_[1], dims_[1]);
}

std::vector<double> Tensor::release() && {
  std::vector<double> out = std::move(data_);
  *this = Tensor();
  return out;
}

bool Tensor::identical(const Tensor& other) const noexcept {
  return dims_ == other.dims_ && dtype_ == other.dtype_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw InputError("empty reduction");
  const double peak = *std::max_element(values.begin(), values.end());
  if (peak == kLogZero) return kLogZero;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixedBytes + 8 * t.rank() + element_bytes(t.dtype()) * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kFormatVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.dims()) put_u64(out, d);
  if (t.dtype() == DType::F64) {
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  } else {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderFixedBytes) throw FormatError("truncated header", bytes.size());
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("bad magic (expected \"MALN\")", 0);
  }
  if (bytes[4] != kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(bytes[4]), 4);
  }
  const std::uint8_t tag = bytes[5];
  if (tag != static_cast<std::uint8_t>(DType::F32) && tag != static_cast<std::uint8_t>(DType::F64)) {
    throw FormatError("unknown dtype tag " + std::to_string(tag), 5);
  }
  const auto dtype = static_cast<DType>(tag);
  const std::size_t rank = bytes[6];

  std::size_t offset = kHeaderFixedBytes;
  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    if (bytes.size() - offset < 8) throw FormatError("truncated dims", bytes.size());
    const std::uint64_t d = get_u64(bytes.data() + offset);
    if (d == 0) throw FormatError("zero-sized dimension", offset);
    if (d > std::numeric_limits<std::size_t>::max() / count) throw FormatError("dims overflow", offset);
    dims[r] = static_cast<std::size_t>(d);
    count *= dims[r];
    offset += 8;
  }

  const std::size_t width = element_bytes(dtype);
  const std::size_t available = (bytes.size() - offset) / width;
  if (available < count) {
    throw FormatError("truncated payload (" + std::to_string(count) + " values expected)",
                      offset + available * width);
  }

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i, offset += width) {
    const std::uint8_t* p = bytes.data() + offset;
    double v;
    if (dtype == DType::F64) {
      v = std::bit_cast<double>(get_u64(p));
    } else {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!storable(v)) throw FormatError("non-finite payload value", offset);
    data[i] = v;
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after payload", offset);
  return Tensor(std::move(dims), std::move(data), dtype);
}

void write_tensor(const Tensor& t, std::ostream& out) {
  const auto bytes = encode_tensor(t);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing tensor stream");
}

Tensor read_tensor(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_tensor(bytes);
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(t, out);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace maln
