#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace rfkit {

/// Dense (batch, channels, freq, time) tensor in row-major order.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t f, std::size_t t, double fill = 0.0)
      : dims_{n, c, f, t}, data_(n * c * f * t, fill) {}

  std::size_t batch() const { return dims_[0]; }
  std::size_t channels() const { return dims_[1]; }
  std::size_t freq() const { return dims_[2]; }
  std::size_t time() const { return dims_[3]; }
  const std::array<std::size_t, 4>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t f, std::size_t t) const {
    return ((n * dims_[1] + c) * dims_[2] + f) * dims_[3] + t;
  }
  double& at(std::size_t n, std::size_t c, std::size_t f, std::size_t t) {
    return data_[offset(n, c, f, t)];
  }
  double at(std::size_t n, std::size_t c, std::size_t f, std::size_t t) const {
    return data_[offset(n, c, f, t)];
  }

  /// One (freq, time) plane.
  std::span<double> plane(std::size_t n, std::size_t c) {
    return {data_.data() + offset(n, c, 0, 0), dims_[2] * dims_[3]};
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return {data_.data() + offset(n, c, 0, 0), dims_[2] * dims_[3]};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Copy of sample n as a batch-1 tensor.
  Tensor4 sample(std::size_t n) const {
    Tensor4 out(1, dims_[1], dims_[2], dims_[3]);
    const std::size_t len = dims_[1] * dims_[2] * dims_[3];
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(n * len), len, out.data_.begin());
    return out;
  }

  bool operator==(const Tensor4&) const = default;

 private:
  std::array<std::size_t, 4> dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

}  // namespace rfkit
