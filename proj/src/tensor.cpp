#include "neutart/tensor.hpp"

#include <cmath>
#include <cstddef>

#include "neutart/errors.hpp"

namespace neutart::num {

namespace {
long shape_product(const std::vector<long>& shape) {
  long n = 1;
  for (long d : shape) {
    if (d < 0) throw ShapeError("tensor dimension must be >= 0, got " + std::to_string(d));
    n *= d;
  }
  return n;
}
} // namespace

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<long>{}};
  t.data_[0] = v;
  return t;
}

Tensor Tensor::full(std::vector<long> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from_data(std::vector<long> shape, std::vector<double> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  if (shape_product(t.shape_) != static_cast<long>(data.size()))
    throw ShapeError("from_data: shape " + t.shape_str() + " does not match " +
                     std::to_string(data.size()) + " values");
  t.data_ = std::move(data);
  return t;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

} // namespace neutart::num
