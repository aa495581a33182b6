#include <cmath>

#include "doctest.h"
#include "neutart/autodiff.hpp"
#include "neutart/errors.hpp"

using namespace neutart::num;
using neutart::Lcg;

namespace {

Tensor random_tensor(Lcg& rng, std::vector<long> shape, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t{shape};
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, for ops with a kink or pole there.
Tensor random_nonzero(Lcg& rng, std::vector<long> shape, double margin = 0.2) {
  Tensor t{shape};
  for (long i = 0; i < t.size(); ++i) {
    double v = rng.uniform(margin, 1.0);
    t[i] = rng.next_double() < 0.5 ? -v : v;
  }
  return t;
}

} // namespace

TEST_CASE("matmul by identity returns the operand") {
  Lcg rng(11);
  Tensor eye = Tensor::zeros({3, 3});
  for (long i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  for (int k = 1; k <= 4; ++k) {
    Tensor m = random_tensor(rng, {3, k});
    NodePtr out = matmul(constant(eye), constant(m));
    for (long i = 0; i < m.size(); ++i) CHECK(out->value[i] == doctest::Approx(m[i]));
  }
}

TEST_CASE("softmax of a constant row is uniform") {
  NodePtr out = softmax_rows(constant(Tensor::zeros({1, 3})));
  for (long i = 0; i < 3; ++i)
    CHECK(out->value[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("mean times count equals sum") {
  Lcg rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(rng, {7});
    NodePtr n = constant(x);
    CHECK(mean(n)->scalar_value() * 7.0 ==
          doctest::Approx(sum(n)->scalar_value()).epsilon(1e-12));
  }
}

TEST_CASE("gradient of x*x at x=3 is 6") {
  NodePtr x = parameter(Tensor::scalar(3.0));
  NodePtr loss = mul(x, x);
  backward(loss);
  CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("gradient of sum is ones") {
  NodePtr x = parameter(Tensor::full({5}, 0.7));
  backward(sum(x));
  for (long i = 0; i < 5; ++i) CHECK(x->grad[i] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Lcg rng(13);
  NodePtr x = parameter(random_tensor(rng, {1, 4}));
  NodePtr gain = parameter(random_tensor(rng, {4}, 0.5, 1.5));
  NodePtr bias = parameter(random_tensor(rng, {4}));
  auto build = [&] { return sum(layer_norm(x, gain, bias)); };
  FiniteDiffOptions opt;
  opt.tol = 1e-5;
  auto report = finite_diff_check(build, {x, gain, bias}, opt);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("finite_diff_check on squared norm is tight") {
  Lcg rng(14);
  NodePtr x = parameter(random_tensor(rng, {6}));
  auto build = [&] { return sum(square(x)); };
  auto report = finite_diff_check(build, {x});
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
  // Closed form: gradient of ||x||^2 is 2x.
  zero_grad({x});
  backward(build());
  for (long i = 0; i < 6; ++i)
    CHECK(x->grad[i] == doctest::Approx(2.0 * x->value[i]));
}

TEST_CASE("finite_diff_check passes on a constant function") {
  NodePtr x = parameter(Tensor::full({3}, 2.0));
  auto build = [&] { return constant(5.0); };
  auto report = finite_diff_check(build, {x});
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("tolerance zero fails on a nonlinear function") {
  Lcg rng(15);
  NodePtr x = parameter(random_tensor(rng, {4}, 0.5, 1.5));
  auto build = [&] { return sum(exp(x)); };
  FiniteDiffOptions opt;
  opt.tol = 0.0;
  auto report = finite_diff_check(build, {x}, opt);
  CHECK(!report.pass);
  CHECK(report.max_rel_err > 0.0);
}

TEST_CASE("gradients accumulate across a sum of losses") {
  Lcg rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor xv = random_nonzero(rng, {5});
    NodePtr x = parameter(xv);
    backward(add(sum(square(x)), sum(exp(x))));
    Tensor combined = x->grad;

    zero_grad({x});
    backward(sum(square(x)));
    Tensor g1 = x->grad;
    zero_grad({x});
    backward(sum(exp(x)));
    Tensor g2 = x->grad;

    for (long i = 0; i < 5; ++i)
      CHECK(combined[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("node feeding two consumers sums both paths") {
  NodePtr x = parameter(Tensor::scalar(2.0));
  NodePtr y = mul(x, x);            // dy/dx = 4
  NodePtr loss = add(y, mul(y, x)); // d/dx (x^2 + x^3) = 2x + 3x^2 = 16
  backward(loss);
  CHECK(x->grad[0] == doctest::Approx(16.0));
}

TEST_CASE("backward requires a scalar loss") {
  NodePtr x = parameter(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(backward(add(x, 1.0)), neutart::ShapeError);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  NodePtr a = parameter(Tensor::zeros({2, 3}));
  NodePtr b = parameter(Tensor::zeros({3, 2}));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const neutart::ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("every op passes a finite-difference check on random instances") {
  FiniteDiffOptions opt; // step 1e-4, tol 1e-4
  for (int trial = 0; trial < 10; ++trial) {
    Lcg rng(100 + trial);
    {
      NodePtr a = parameter(random_tensor(rng, {3, 4}));
      NodePtr b = parameter(random_tensor(rng, {3, 4}));
      auto build = [&] { return sum(mul(add(a, b), sub(a, b))); };
      CHECK(finite_diff_check(build, {a, b}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {2, 3}));
      NodePtr b = parameter(random_nonzero(rng, {2, 3}, 0.4));
      auto build = [&] { return sum(div(a, b)); };
      CHECK(finite_diff_check(build, {a, b}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {3, 2}));
      NodePtr b = parameter(random_tensor(rng, {2, 4}));
      auto build = [&] { return sum(square(matmul(a, b))); };
      CHECK(finite_diff_check(build, {a, b}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {3, 4}));
      auto build = [&] { return sum(square(transpose(a))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {2, 3}));
      NodePtr b = parameter(random_tensor(rng, {1, 3}));
      auto build = [&] { return sum(square(concat(a, b, 0))); };
      CHECK(finite_diff_check(build, {a, b}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {2, 3}));
      NodePtr c = parameter(random_tensor(rng, {2, 2}));
      auto build = [&] { return sum(square(concat(a, c, 1))); };
      CHECK(finite_diff_check(build, {a, c}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {1, 4}));
      NodePtr b = parameter(random_tensor(rng, {2, 4}));
      auto build = [&] { return sum(square(stack_rows({a, b, a}))); };
      CHECK(finite_diff_check(build, {a, b}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {4, 5}));
      auto build = [&] { return sum(square(slice(a, 1, 3, 2, 5))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {4, 3}));
      auto build = [&] { return sum(square(reshape(slice_rows(a, 0, 2), {6}))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {3, 4}));
      auto build = [&] { return sum(square(row_sum(a))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {2, 3}, 0.3, 2.0));
      auto build = [&] { return sum(mul(sqrt(a), log(a))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_nonzero(rng, {2, 3}, 0.3));
      auto build = [&] { return sum(abs(a)); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {2, 3}));
      auto build = [&] { return sum(mul(exp(a), add(sin(a), cos(a)))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_nonzero(rng, {2, 4}, 0.3));
      auto build = [&] { return sum(square(relu(a))); };
      CHECK(finite_diff_check(build, {a}, opt).pass);
    }
    {
      NodePtr a = parameter(random_tensor(rng, {3, 5}));
      NodePtr w = parameter(random_tensor(rng, {5, 2}));
      auto build = [&] { return sum(square(matmul(softmax_rows(a), w))); };
      CHECK(finite_diff_check(build, {a, w}, opt).pass);
    }
    {
      NodePtr x = parameter(random_tensor(rng, {3, 4}));
      NodePtr g = parameter(random_tensor(rng, {4}, 0.5, 1.5));
      NodePtr b = parameter(random_tensor(rng, {4}));
      auto build = [&] { return sum(square(layer_norm(x, g, b))); };
      CHECK(finite_diff_check(build, {x, g, b}, opt).pass);
    }
    {
      NodePtr table = parameter(random_tensor(rng, {6, 3}));
      std::vector<long> ids{0, 5, 2, 5};
      auto build = [&] { return sum(square(embedding_lookup(table, ids))); };
      CHECK(finite_diff_check(build, {table}, opt).pass);
    }
    {
      NodePtr x = parameter(random_tensor(rng, {2, 3}));
      NodePtr b = parameter(random_tensor(rng, {3}));
      auto build = [&] { return mean(square(add_row_bias(x, b))); };
      CHECK(finite_diff_check(build, {x, b}, opt).pass);
    }
    {
      NodePtr x = parameter(random_tensor(rng, {2, 2}));
      auto build = [&] { return sub(mul(neg(mean(x)), 3.0), div(sum(x), 2.0)); };
      CHECK(finite_diff_check(build, {x}, opt).pass);
    }
  }
}

TEST_CASE("dropout rescales kept elements and is droppable") {
  Lcg rng(77);
  NodePtr x = parameter(Tensor::full({100}, 1.0));
  NodePtr d = dropout(x, 0.5, rng);
  long kept = 0;
  for (long i = 0; i < 100; ++i) {
    if (d->value[i] != 0.0) {
      CHECK(d->value[i] == doctest::Approx(2.0));
      ++kept;
    }
  }
  CHECK(kept > 20);
  CHECK(kept < 80);
  Lcg rng2(78);
  NodePtr same = dropout(x, 0.0, rng2);
  CHECK(same.get() == x.get());
}

TEST_CASE("dropout gradient respects the sampled mask") {
  Lcg rng(79);
  NodePtr x = parameter(Tensor::full({50}, 3.0));
  NodePtr d = dropout(x, 0.4, rng);
  backward(sum(d));
  for (long i = 0; i < 50; ++i) {
    if (d->value[i] == 0.0)
      CHECK(x->grad[i] == 0.0);
    else
      CHECK(x->grad[i] == doctest::Approx(1.0 / 0.6));
  }
}

TEST_CASE("embedding_lookup rejects out-of-range ids") {
  NodePtr table = parameter(Tensor::zeros({4, 2}));
  CHECK_THROWS_AS(embedding_lookup(table, {0, 4}), neutart::ShapeError);
}

TEST_CASE("constant subgraphs do not materialize gradients") {
  NodePtr c = constant(Tensor::full({3}, 2.0));
  NodePtr x = parameter(Tensor::full({3}, 1.0));
  backward(sum(mul(c, x)));
  CHECK(c->grad.size() == 0);
  for (long i = 0; i < 3; ++i) CHECK(x->grad[i] == doctest::Approx(2.0));
}
