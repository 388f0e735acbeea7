#include "tinydet/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "tinydet/error.hpp"

namespace tinydet {

namespace {

void check_shape(const TensorShape& s) {
  if (s.batch < 1 || s.channels < 1 || s.height < 1 || s.width < 1)
    throw ValidationError("tensor dimensions must all be at least 1");
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::span<const std::byte> b, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[offset + i]) << (8 * i);
  return v;
}

}  // namespace

Tensor::Tensor(TensorShape shape, double fill) : shape_(shape) {
  check_shape(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(TensorShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_.numel())
    throw ValidationError("tensor data length " + std::to_string(data_.size()) + " does not match shape (" +
                          std::to_string(shape_.numel()) + " elements)");
}

std::vector<std::byte> to_blob(const Tensor& t) {
  std::vector<std::byte> out;
  out.reserve(16 + 8 * t.size());
  const auto& s = t.shape();
  for (int d : {s.batch, s.channels, s.height, s.width}) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor tensor_from_blob(std::span<const std::byte> blob) {
  if (blob.size() < 16) throw ParseError("tensor blob shorter than its 16-byte header");
  std::array<std::uint64_t, 4> dims{};
  for (std::size_t i = 0; i < 4; ++i) dims[i] = get_le(blob, 4 * i, 4);
  for (auto d : dims) {
    if (d == 0 || d > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
      throw ParseError("tensor blob has an invalid dimension " + std::to_string(d));
  }
  const TensorShape shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                          static_cast<int>(dims[3])};
  const std::size_t n = shape.numel();
  if (blob.size() != 16 + 8 * n)
    throw ParseError("tensor blob holds " + std::to_string(blob.size() - 16) + " payload bytes, expected " +
                     std::to_string(8 * n));
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_le(blob, 16 + 8 * i, 8));
  return Tensor(shape, std::move(data));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  const auto blob = to_blob(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open tensor file '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return tensor_from_blob(std::as_bytes(std::span(raw)));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace tinydet
