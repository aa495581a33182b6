#include <limits>

#include "doctest.h"
#include "neutart/tensor.hpp"
#include "neutart/errors.hpp"

using neutart::num::Tensor;

TEST_CASE("scalar tensor") {
  Tensor t = Tensor::scalar(3.5);
  CHECK(t.is_scalar());
  CHECK(t.size() == 1);
  CHECK(t[0] == 3.5);
}

TEST_CASE("zeros and full") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 3);
  CHECK(z.size() == 6);
  for (long i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

  Tensor f = Tensor::full({4}, -1.25);
  for (long i = 0; i < 4; ++i) CHECK(f[i] == -1.25);
}

TEST_CASE("row-major at()") {
  Tensor t = Tensor::zeros({2, 3});
  t.at(0, 0) = 1;
  t.at(0, 2) = 3;
  t.at(1, 1) = 5;
  CHECK(t[0] == 1);
  CHECK(t[2] == 3);
  CHECK(t[4] == 5);
}

TEST_CASE("from_data size mismatch throws") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), neutart::ShapeError);
}

TEST_CASE("negative dimension throws") {
  CHECK_THROWS_AS(Tensor({-1, 4}), neutart::ShapeError);
}

TEST_CASE("same_shape") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  Tensor c = Tensor::zeros({3, 2});
  CHECK(a.same_shape(b));
  CHECK(!a.same_shape(c));
}

TEST_CASE("all_finite") {
  Tensor a = Tensor::zeros({3});
  CHECK(a.all_finite());
  a[1] = std::numeric_limits<double>::infinity();
  CHECK(!a.all_finite());
}
