#include "robustcf/nn/tensor3.hpp"

#include "robustcf/tensor.hpp"

namespace rcf::nn {

Tensor3::Tensor3(std::size_t width, std::size_t height, std::size_t channels, double fill)
    : w_(width), h_(height), c_(channels), data_(width * height * channels, fill) {}

Tensor3& Tensor3::operator+=(const Tensor3& o) {
  if (!same_shape(o)) throw ShapeError("Tensor3 +=: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

}  // namespace rcf::nn
