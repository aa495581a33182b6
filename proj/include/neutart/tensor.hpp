#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace neutart::num {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are the
// common cases; higher ranks are storage-only.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape);
  Tensor(std::initializer_list<long> shape) : Tensor(std::vector<long>(shape)) {}

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<long> shape, double v);
  static Tensor from_data(std::vector<long> shape, std::vector<double> data);

  const std::vector<long>& shape() const { return shape_; }
  long ndim() const { return static_cast<long>(shape_.size()); }
  long size() const { return static_cast<long>(data_.size()); }
  long rows() const { return ndim() >= 1 ? shape_[0] : 1; }
  long cols() const { return ndim() >= 2 ? shape_[1] : 1; }
  bool is_scalar() const { return data_.size() == 1; }

  double operator[](long i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  // 2-d accessors; for 1-d tensors at(r, 0) aliases element r.
  double at(long r, long c) const { return data_[static_cast<size_t>(r * cols() + c)]; }
  double& at(long r, long c) { return data_[static_cast<size_t>(r * cols() + c)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  void fill(double v);
  bool all_finite() const;

private:
  std::vector<long> shape_;
  std::vector<double> data_;
};

} // namespace neutart::num
