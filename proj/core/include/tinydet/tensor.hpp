#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace tinydet {

struct TensorShape {
  int batch = 1;
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(batch) * static_cast<std::size_t>(channels) *
           static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  bool operator==(const TensorShape&) const = default;
};

/// Dense NCHW array of doubles. Every dimension is at least 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorShape shape, double fill = 0.0);
  Tensor(TensorShape shape, std::vector<double> data);

  const TensorShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.channels + c) * shape_.height + h) * shape_.width + w;
  }

  TensorShape shape_;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Flat binary form: four little-endian uint32 dims (N, C, H, W) followed by
/// the values as little-endian IEEE-754 doubles.
std::vector<std::byte> to_blob(const Tensor& t);
Tensor tensor_from_blob(std::span<const std::byte> blob);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace tinydet
