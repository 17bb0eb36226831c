#pragma once

#include <cstddef>
#include <vector>

namespace rcf::nn {

/// Real 3-D tensor of shape (width, height, channels), row-major with the
/// channel index fastest. Width runs over APs, height over users.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t width, std::size_t height, std::size_t channels, double fill = 0.0);

  std::size_t width() const { return w_; }
  std::size_t height() const { return h_; }
  std::size_t channels() const { return c_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t x, std::size_t y, std::size_t ch) {
    return data_[(x * h_ + y) * c_ + ch];
  }
  double operator()(std::size_t x, std::size_t y, std::size_t ch) const {
    return data_[(x * h_ + y) * c_ + ch];
  }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor3& o) const { return w_ == o.w_ && h_ == o.h_ && c_ == o.c_; }
  bool operator==(const Tensor3&) const = default;

  Tensor3& operator+=(const Tensor3& o);

 private:
  std::size_t w_ = 0, h_ = 0, c_ = 0;
  std::vector<double> data_;
};

using Batch = std::vector<Tensor3>;

}  // namespace rcf::nn
