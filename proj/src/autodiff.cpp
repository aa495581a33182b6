#include "neutart/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "neutart/errors.hpp"

namespace neutart::num {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents, const char* op,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  for (const auto& p : n->parents)
    if (p->needs_grad) {
      n->needs_grad = true;
      break;
    }
  return n;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() +
                   " and " + b.shape_str());
}

void require_2d(const char* op, const Tensor& t) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-d tensor, got " + t.shape_str());
}

// Elementwise binary with one-element broadcast on either side.
template <class Fwd, class BackA, class BackB>
NodePtr elementwise2(const NodePtr& a, const NodePtr& b, const char* op, Fwd fwd,
                     BackA back_a, BackB back_b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  bool a_scalar = av.is_scalar();
  bool b_scalar = bv.is_scalar();
  if (!a_scalar && !b_scalar && !av.same_shape(bv)) shape_fail(op, av, bv);

  const Tensor& big = (a_scalar && !b_scalar) ? bv : av;
  Tensor out(big.shape());
  long n = out.size();
  for (long i = 0; i < n; ++i)
    out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);

  return make_node(std::move(out), {a, b}, op,
                   [a_scalar, b_scalar, back_a, back_b](Node& self) {
                     Node& pa = *self.parents[0];
                     Node& pb = *self.parents[1];
                     long n = self.value.size();
                     if (pa.needs_grad) {
                       Tensor& ga = pa.ensure_grad();
                       for (long i = 0; i < n; ++i) {
                         double x = pa.value[a_scalar ? 0 : i];
                         double y = pb.value[b_scalar ? 0 : i];
                         ga[a_scalar ? 0 : i] += self.grad[i] * back_a(x, y);
                       }
                     }
                     if (pb.needs_grad) {
                       Tensor& gb = pb.ensure_grad();
                       for (long i = 0; i < n; ++i) {
                         double x = pa.value[a_scalar ? 0 : i];
                         double y = pb.value[b_scalar ? 0 : i];
                         gb[b_scalar ? 0 : i] += self.grad[i] * back_b(x, y);
                       }
                     }
                   });
}

template <class Fwd, class Back>
NodePtr elementwise1(const NodePtr& a, const char* op, Fwd fwd, Back back) {
  Tensor out(a->value.shape());
  long n = out.size();
  for (long i = 0; i < n; ++i) out[i] = fwd(a->value[i]);
  return make_node(std::move(out), {a}, op, [back](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.needs_grad) return;
    Tensor& ga = pa.ensure_grad();
    long n = self.value.size();
    for (long i = 0; i < n; ++i)
      ga[i] += self.grad[i] * back(pa.value[i], self.value[i]);
  });
}

} // namespace

Tensor& Node::ensure_grad() {
  if (!has_grad()) grad = Tensor(value.shape());
  return grad;
}

NodePtr parameter(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->needs_grad = true;
  return n;
}

NodePtr constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

NodePtr constant(double v) { return constant(Tensor::scalar(v)); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
  return elementwise2(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return elementwise2(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  return elementwise2(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
  return elementwise2(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

NodePtr add(const NodePtr& a, double s) { return add(a, constant(s)); }
NodePtr sub(const NodePtr& a, double s) { return sub(a, constant(s)); }
NodePtr sub(double s, const NodePtr& a) { return sub(constant(s), a); }
NodePtr mul(const NodePtr& a, double s) { return mul(a, constant(s)); }
NodePtr div(const NodePtr& a, double s) { return div(a, constant(s)); }
NodePtr div(double s, const NodePtr& a) { return div(constant(s), a); }
NodePtr neg(const NodePtr& a) { return mul(a, -1.0); }

NodePtr add_row_bias(const NodePtr& x, const NodePtr& bias) {
  require_2d("add_row_bias", x->value);
  if (bias->value.size() != x->value.cols()) shape_fail("add_row_bias", x->value, bias->value);
  Tensor out(x->value.shape());
  long rows = out.rows(), cols = out.cols();
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) out.at(r, c) = x->value.at(r, c) + bias->value[c];
  return make_node(std::move(out), {x, bias}, "add_row_bias", [](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    long rows = self.value.rows(), cols = self.value.cols();
    if (px.needs_grad) {
      Tensor& g = px.ensure_grad();
      for (long i = 0; i < rows * cols; ++i) g[i] += self.grad[i];
    }
    if (pb.needs_grad) {
      Tensor& g = pb.ensure_grad();
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) g[c] += self.grad.at(r, c);
    }
  });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  require_2d("matmul", a->value);
  require_2d("matmul", b->value);
  long n = a->value.rows(), k = a->value.cols(), m = b->value.cols();
  if (b->value.rows() != k) shape_fail("matmul", a->value, b->value);
  Tensor out({n, m});
  const double* ad = a->value.data().data();
  const double* bd = b->value.data().data();
  double* od = out.data().data();
  for (long i = 0; i < n; ++i)
    for (long kk = 0; kk < k; ++kk) {
      double av = ad[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = bd + kk * m;
      double* orow = od + i * m;
      for (long j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  return make_node(std::move(out), {a, b}, "matmul", [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* gd = self.grad.data().data();
    if (pa.needs_grad) {
      // dA[i,kk] += sum_j dC[i,j] * B[kk,j]
      Tensor& ga = pa.ensure_grad();
      const double* bd = pb.value.data().data();
      for (long i = 0; i < n; ++i)
        for (long kk = 0; kk < k; ++kk) {
          const double* grow = gd + i * m;
          const double* brow = bd + kk * m;
          double acc = 0.0;
          for (long j = 0; j < m; ++j) acc += grow[j] * brow[j];
          ga[i * k + kk] += acc;
        }
    }
    if (pb.needs_grad) {
      // dB[kk,j] += sum_i A[i,kk] * dC[i,j]
      Tensor& gb = pb.ensure_grad();
      const double* ad = pa.value.data().data();
      double* gbd = gb.data().data();
      for (long i = 0; i < n; ++i)
        for (long kk = 0; kk < k; ++kk) {
          double av = ad[i * k + kk];
          if (av == 0.0) continue;
          const double* grow = gd + i * m;
          double* brow = gbd + kk * m;
          for (long j = 0; j < m; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

NodePtr transpose(const NodePtr& a) {
  require_2d("transpose", a->value);
  long r = a->value.rows(), c = a->value.cols();
  Tensor out({c, r});
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
  return make_node(std::move(out), {a}, "transpose", [r, c](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.needs_grad) return;
    Tensor& g = pa.ensure_grad();
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

NodePtr concat(const NodePtr& a, const NodePtr& b, int axis) {
  require_2d("concat", a->value);
  require_2d("concat", b->value);
  long ar = a->value.rows(), ac = a->value.cols();
  long br = b->value.rows(), bc = b->value.cols();
  if (axis == 0) {
    if (ac != bc) shape_fail("concat", a->value, b->value);
    Tensor out({ar + br, ac});
    std::copy(a->value.data().begin(), a->value.data().end(), out.data().begin());
    std::copy(b->value.data().begin(), b->value.data().end(),
              out.data().begin() + static_cast<long>(ar * ac));
    return make_node(std::move(out), {a, b}, "concat", [ar, ac](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      long split = ar * ac;
      if (pa.needs_grad) {
        Tensor& g = pa.ensure_grad();
        for (long i = 0; i < split; ++i) g[i] += self.grad[i];
      }
      if (pb.needs_grad) {
        Tensor& g = pb.ensure_grad();
        long rest = self.value.size() - split;
        for (long i = 0; i < rest; ++i) g[i] += self.grad[split + i];
      }
    });
  }
  if (axis == 1) {
    if (ar != br) shape_fail("concat", a->value, b->value);
    Tensor out({ar, ac + bc});
    for (long r = 0; r < ar; ++r) {
      for (long c = 0; c < ac; ++c) out.at(r, c) = a->value.at(r, c);
      for (long c = 0; c < bc; ++c) out.at(r, ac + c) = b->value.at(r, c);
    }
    return make_node(std::move(out), {a, b}, "concat", [ar, ac, bc](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.needs_grad) {
        Tensor& g = pa.ensure_grad();
        for (long r = 0; r < ar; ++r)
          for (long c = 0; c < ac; ++c) g.at(r, c) += self.grad.at(r, c);
      }
      if (pb.needs_grad) {
        Tensor& g = pb.ensure_grad();
        for (long r = 0; r < ar; ++r)
          for (long c = 0; c < bc; ++c) g.at(r, c) += self.grad.at(r, ac + c);
      }
    });
  }
  throw ShapeError("concat: axis must be 0 or 1");
}

NodePtr stack_rows(const std::vector<NodePtr>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  // 1-d pieces count as a single row.
  auto cols_of = [](const Tensor& t) { return t.ndim() >= 2 ? t.cols() : t.size(); };
  auto rows_of = [](const Tensor& t) { return t.ndim() >= 2 ? t.rows() : 1; };
  long cols = cols_of(rows[0]->value);
  long total_rows = 0;
  std::vector<long> piece_rows;
  piece_rows.reserve(rows.size());
  for (const auto& p : rows) {
    if (cols_of(p->value) != cols) shape_fail("stack_rows", rows[0]->value, p->value);
    piece_rows.push_back(rows_of(p->value));
    total_rows += piece_rows.back();
  }
  Tensor out({total_rows, cols});
  long offset = 0;
  for (const auto& p : rows) {
    std::copy(p->value.data().begin(), p->value.data().end(), out.data().begin() + offset);
    offset += p->value.size();
  }
  return make_node(std::move(out), rows, "stack_rows", [piece_rows, cols](Node& self) {
    long offset = 0;
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      long n = piece_rows[i] * cols;
      if (p.needs_grad) {
        Tensor& g = p.ensure_grad();
        for (long j = 0; j < n; ++j) g[j] += self.grad[offset + j];
      }
      offset += n;
    }
  });
}

NodePtr slice(const NodePtr& x, long r0, long r1, long c0, long c1) {
  require_2d("slice", x->value);
  long rows = x->value.rows(), cols = x->value.cols();
  if (r0 < 0 || r1 > rows || c0 < 0 || c1 > cols || r0 > r1 || c0 > c1)
    throw ShapeError("slice: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") outside " + x->value.shape_str());
  Tensor out({r1 - r0, c1 - c0});
  for (long r = r0; r < r1; ++r)
    for (long c = c0; c < c1; ++c) out.at(r - r0, c - c0) = x->value.at(r, c);
  return make_node(std::move(out), {x}, "slice", [r0, r1, c0, c1](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    for (long r = r0; r < r1; ++r)
      for (long c = c0; c < c1; ++c) g.at(r, c) += self.grad.at(r - r0, c - c0);
  });
}

NodePtr slice_rows(const NodePtr& x, long r0, long r1) {
  return slice(x, r0, r1, 0, x->value.cols());
}

NodePtr reshape(const NodePtr& x, std::vector<long> shape) {
  Tensor out = Tensor::from_data(std::move(shape), x->value.data());
  if (out.size() != x->value.size()) shape_fail("reshape", x->value, out);
  return make_node(std::move(out), {x}, "reshape", [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    long n = self.value.size();
    for (long i = 0; i < n; ++i) g[i] += self.grad[i];
  });
}

NodePtr sum(const NodePtr& x) {
  double acc = 0.0;
  for (double v : x->value.data()) acc += v;
  return make_node(Tensor::scalar(acc), {x}, "sum", [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    double gs = self.grad[0];
    long n = p.value.size();
    for (long i = 0; i < n; ++i) g[i] += gs;
  });
}

NodePtr mean(const NodePtr& x) {
  long n = x->value.size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (double v : x->value.data()) acc += v;
  return make_node(Tensor::scalar(acc / n), {x}, "mean", [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    double gs = self.grad[0] / n;
    for (long i = 0; i < n; ++i) g[i] += gs;
  });
}

NodePtr row_sum(const NodePtr& x) {
  require_2d("row_sum", x->value);
  long rows = x->value.rows(), cols = x->value.cols();
  Tensor out({rows});
  for (long r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (long c = 0; c < cols; ++c) acc += x->value.at(r, c);
    out[r] = acc;
  }
  return make_node(std::move(out), {x}, "row_sum", [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    for (long r = 0; r < rows; ++r) {
      double gs = self.grad[r];
      for (long c = 0; c < cols; ++c) g.at(r, c) += gs;
    }
  });
}

NodePtr sqrt(const NodePtr& x) {
  return elementwise1(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

NodePtr square(const NodePtr& x) {
  return elementwise1(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

NodePtr abs(const NodePtr& x) {
  return elementwise1(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

NodePtr exp(const NodePtr& x) {
  return elementwise1(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

NodePtr log(const NodePtr& x) {
  return elementwise1(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

NodePtr sin(const NodePtr& x) {
  return elementwise1(
      x, "sin", [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

NodePtr cos(const NodePtr& x) {
  return elementwise1(
      x, "cos", [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

NodePtr relu(const NodePtr& x) {
  return elementwise1(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

NodePtr softmax_rows(const NodePtr& x) {
  require_2d("softmax_rows", x->value);
  long rows = x->value.rows(), cols = x->value.cols();
  Tensor out(x->value.shape());
  for (long r = 0; r < rows; ++r) {
    double mx = x->value.at(r, 0);
    for (long c = 1; c < cols; ++c) mx = std::max(mx, x->value.at(r, c));
    double z = 0.0;
    for (long c = 0; c < cols; ++c) {
      double e = std::exp(x->value.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (long c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  return make_node(std::move(out), {x}, "softmax_rows", [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    for (long r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (long c = 0; c < cols; ++c) dot += self.grad.at(r, c) * self.value.at(r, c);
      for (long c = 0; c < cols; ++c)
        g.at(r, c) += self.value.at(r, c) * (self.grad.at(r, c) - dot);
    }
  });
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, double eps) {
  require_2d("layer_norm", x->value);
  long rows = x->value.rows(), cols = x->value.cols();
  if (gain->value.size() != cols || bias->value.size() != cols)
    shape_fail("layer_norm", x->value, gain->value);
  Tensor out(x->value.shape());
  std::vector<double> inv_std(rows), means(rows);
  for (long r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (long c = 0; c < cols; ++c) mu += x->value.at(r, c);
    mu /= cols;
    double var = 0.0;
    for (long c = 0; c < cols; ++c) {
      double d = x->value.at(r, c) - mu;
      var += d * d;
    }
    var /= cols;
    double is = 1.0 / std::sqrt(var + eps);
    means[r] = mu;
    inv_std[r] = is;
    for (long c = 0; c < cols; ++c)
      out.at(r, c) = (x->value.at(r, c) - mu) * is * gain->value[c] + bias->value[c];
  }
  return make_node(std::move(out), {x, gain, bias}, "layer_norm",
                   [rows, cols, means, inv_std](Node& self) {
                     Node& px = *self.parents[0];
                     Node& pg = *self.parents[1];
                     Node& pb = *self.parents[2];
                     for (long r = 0; r < rows; ++r) {
                       double m1 = 0.0, m2 = 0.0; // means of g*dy and g*dy*xhat
                       for (long c = 0; c < cols; ++c) {
                         double xhat = (px.value.at(r, c) - means[r]) * inv_std[r];
                         double gdy = pg.value[c] * self.grad.at(r, c);
                         m1 += gdy;
                         m2 += gdy * xhat;
                       }
                       m1 /= cols;
                       m2 /= cols;
                       if (px.needs_grad) {
                         Tensor& gx = px.ensure_grad();
                         for (long c = 0; c < cols; ++c) {
                           double xhat = (px.value.at(r, c) - means[r]) * inv_std[r];
                           double gdy = pg.value[c] * self.grad.at(r, c);
                           gx.at(r, c) += inv_std[r] * (gdy - m1 - xhat * m2);
                         }
                       }
                       if (pg.needs_grad) {
                         Tensor& gg = pg.ensure_grad();
                         for (long c = 0; c < cols; ++c) {
                           double xhat = (px.value.at(r, c) - means[r]) * inv_std[r];
                           gg[c] += self.grad.at(r, c) * xhat;
                         }
                       }
                       if (pb.needs_grad) {
                         Tensor& gb = pb.ensure_grad();
                         for (long c = 0; c < cols; ++c) gb[c] += self.grad.at(r, c);
                       }
                     }
                   });
}

NodePtr embedding_lookup(const NodePtr& table, const std::vector<long>& ids) {
  require_2d("embedding_lookup", table->value);
  long vocab = table->value.rows(), dim = table->value.cols();
  for (long id : ids)
    if (id < 0 || id >= vocab)
      throw ShapeError("embedding_lookup: index " + std::to_string(id) +
                       " outside table " + table->value.shape_str());
  Tensor out({static_cast<long>(ids.size()), dim});
  for (size_t i = 0; i < ids.size(); ++i)
    for (long c = 0; c < dim; ++c) out.at(static_cast<long>(i), c) = table->value.at(ids[i], c);
  return make_node(std::move(out), {table}, "embedding_lookup", [ids, dim](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (long c = 0; c < dim; ++c)
        g.at(ids[i], c) += self.grad.at(static_cast<long>(i), c);
  });
}

NodePtr dropout(const NodePtr& x, double p, Lcg& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  Tensor mask(x->value.shape());
  double keep_scale = 1.0 / (1.0 - p);
  for (long i = 0; i < mask.size(); ++i)
    mask[i] = rng.next_double() < p ? 0.0 : keep_scale;
  Tensor out(x->value.shape());
  for (long i = 0; i < out.size(); ++i) out[i] = x->value[i] * mask[i];
  return make_node(std::move(out), {x}, "dropout", [mask](Node& self) {
    Node& p0 = *self.parents[0];
    if (!p0.needs_grad) return;
    Tensor& g = p0.ensure_grad();
    long n = self.value.size();
    for (long i = 0; i < n; ++i) g[i] += self.grad[i] * mask[i];
  });
}

void backward(const NodePtr& loss) {
  if (!loss) throw NumericError("backward: null loss");
  if (loss->value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + loss->value.shape_str());

  // Iterative post-order topological sort over needs_grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->needs_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->has_grad()) node->backprop(*node);
  }
}

void zero_grad(const std::vector<NodePtr>& params) {
  for (const auto& p : params) {
    if (p->has_grad()) p->grad.fill(0.0);
  }
}

FiniteDiffReport finite_diff_check(const std::function<NodePtr()>& build_loss,
                                   const std::vector<NodePtr>& params,
                                   const FiniteDiffOptions& opt) {
  if (opt.step <= 0) throw ConfigError("finite_diff_check: step must be > 0");
  zero_grad(params);
  NodePtr loss = build_loss();
  if (!loss->value.all_finite())
    throw NumericError("finite_diff_check: loss is not finite at the base point");
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params)
    analytic.push_back(p->has_grad() ? p->grad : Tensor(p->value.shape()));

  auto probe = [&]() {
    NodePtr l = build_loss();
    double v = l->scalar_value();
    if (!std::isfinite(v))
      throw NumericError("finite_diff_check: loss is not finite at a probe point");
    return v;
  };

  FiniteDiffReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& v = params[pi]->value;
    long n = v.size();
    long stride = 1;
    if (opt.max_elements_per_param > 0 && n > opt.max_elements_per_param)
      stride = (n + opt.max_elements_per_param - 1) / opt.max_elements_per_param;
    double param_max = 0.0;
    for (long i = 0; i < n; i += stride) {
      double saved = v[i];
      v[i] = saved + opt.step;
      double f_plus = probe();
      v[i] = saved - opt.step;
      double f_minus = probe();
      v[i] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * opt.step);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      double rel = std::abs(a - numeric) / denom;
      param_max = std::max(param_max, rel);
    }
    report.per_param_max.push_back(param_max);
    report.max_rel_err = std::max(report.max_rel_err, param_max);
  }
  report.pass = report.max_rel_err < opt.tol;
  return report;
}

} // namespace neutart::num
