#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "neutart/rng.hpp"
#include "neutart/tensor.hpp"

namespace neutart::num {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `value` is fixed once the node is
// created; `grad` accumulates d(loss)/d(value) during backward(). The
// parent graph is acyclic by construction (ops only consume existing nodes).
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false; // leaf parameter
  bool needs_grad = false;    // some requires_grad leaf is reachable
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Adds this node's grad contribution into its parents' grads.
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad();
  // Distinguishes a materialized gradient from a default-constructed Tensor;
  // shape alone cannot (a rank-0 scalar and an empty tensor share shape {}).
  bool has_grad() const { return grad.same_shape(value) && grad.size() == value.size(); }
  double scalar_value() const { return value[0]; }
};

// Leaf constructors.
NodePtr parameter(Tensor v);
NodePtr constant(Tensor v);
NodePtr constant(double v);

// Elementwise binary ops; operands must have equal shapes, except that a
// one-element operand broadcasts against any shape.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, double s);
NodePtr sub(const NodePtr& a, double s);
NodePtr sub(double s, const NodePtr& a);
NodePtr mul(const NodePtr& a, double s);
NodePtr div(const NodePtr& a, double s);
NodePtr div(double s, const NodePtr& a);
NodePtr neg(const NodePtr& a);

// x: N x D, bias: [D]; adds the bias to every row.
NodePtr add_row_bias(const NodePtr& x, const NodePtr& bias);

NodePtr matmul(const NodePtr& a, const NodePtr& b); // (N x K) . (K x M)
NodePtr transpose(const NodePtr& a);                // 2-d
NodePtr concat(const NodePtr& a, const NodePtr& b, int axis); // 2-d, axis 0 or 1
NodePtr stack_rows(const std::vector<NodePtr>& rows); // n-ary concat along axis 0
NodePtr slice(const NodePtr& x, long r0, long r1, long c0, long c1);
NodePtr slice_rows(const NodePtr& x, long r0, long r1);
NodePtr reshape(const NodePtr& x, std::vector<long> shape);

NodePtr sum(const NodePtr& x);     // -> scalar
NodePtr mean(const NodePtr& x);    // -> scalar
NodePtr row_sum(const NodePtr& x); // N x D -> [N]

NodePtr sqrt(const NodePtr& x);
NodePtr square(const NodePtr& x);
NodePtr abs(const NodePtr& x);
NodePtr exp(const NodePtr& x);
NodePtr log(const NodePtr& x);
NodePtr sin(const NodePtr& x);
NodePtr cos(const NodePtr& x);
NodePtr relu(const NodePtr& x);

NodePtr softmax_rows(const NodePtr& x); // softmax along the last dim, per row

// Row-wise layer normalization with learned per-feature gain and bias.
NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias,
                   double eps = 1e-5);

// table: V x D; result: ids.size() x D. Backward scatter-adds into the table.
NodePtr embedding_lookup(const NodePtr& table, const std::vector<long>& ids);

// Inverted dropout; the mask is sampled once at construction. p in [0, 1).
NodePtr dropout(const NodePtr& x, double p, Lcg& rng);

// Reverse-mode sweep from a scalar loss. Gradients accumulate (+=) into every
// reachable node that leads to a requires_grad leaf; call zero_grad between
// independent backward passes over the same parameters.
void backward(const NodePtr& loss);
void zero_grad(const std::vector<NodePtr>& params);

struct FiniteDiffOptions {
  double step = 1e-4;
  double tol = 1e-4;
  // 0 = probe every element; otherwise an evenly strided subset per parameter.
  long max_elements_per_param = 0;
};

struct FiniteDiffReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::vector<double> per_param_max; // one entry per checked parameter
};

// Central-difference gradient check. `build_loss` must rebuild the scalar
// loss graph from the current parameter values on every call and must be
// deterministic. Relative error uses denominator max(|analytic|, |numeric|, 1e-6).
FiniteDiffReport finite_diff_check(const std::function<NodePtr()>& build_loss,
                                   const std::vector<NodePtr>& params,
                                   const FiniteDiffOptions& opt = {});

} // namespace neutart::num
