#pragma once

#include <string>

#include "neutart/autodiff.hpp"
#include "neutart/variance.hpp"

namespace neutart::loss {

// Every loss is a scalar node in the training graph; plain numbers fall out
// via ->value[0] once the graph is evaluated.

struct VarianceLossNodes {
  num::NodePtr pitch;
  num::NodePtr energy;
  num::NodePtr duration;
};

// Predictions enter as graph nodes ([N] each, durations in the log1p
// domain); targets are plain measurements and become constants.
VarianceLossNodes variance_losses(const num::NodePtr& pred_pitch,
                                  const num::NodePtr& pred_energy,
                                  const num::NodePtr& pred_log_duration,
                                  const VarianceTargets& target);

// Measurement-only form with the same MSE conventions.
struct VarianceLossValues {
  double pitch = 0.0;
  double energy = 0.0;
  double duration = 0.0;
};
VarianceLossValues variance_losses(const VarianceTargets& pred, const VarianceTargets& target);

// Mean absolute error over all T x 80 entries.
num::NodePtr spectrogram_loss(const num::NodePtr& pred, const num::NodePtr& target);

// Mean squared error over all T x 53 entries.
num::NodePtr flame_mse(const num::NodePtr& pred, const num::NodePtr& target);

// (1/T) * sum_t ||x(t+1) - x(t)||^2. The denominator is T even though the
// sum has T-1 terms.
num::NodePtr gradient_loss(const num::NodePtr& x);

// (1/T) * sum_t ||(pred(t+1)-pred(t)) - (target(t+1)-target(t))||^2;
// invariant under adding a constant vector to either side.
num::NodePtr flow_loss(const num::NodePtr& pred, const num::NodePtr& target);

// Maps a T x 53 coefficient track to per-frame feature rows of a fixed
// width. Must be deterministic and length-preserving.
class LipFeatureExtractor {
public:
  virtual ~LipFeatureExtractor() = default;
  virtual num::NodePtr extract(const num::NodePtr& frames) const = 0;
};

struct LipreadingLoss {
  num::NodePtr value;
  long skipped_frames = 0; // frames whose feature vector had zero norm
};

// (1/T) * sum_t (1 - cos(f_target(t), f_pred(t))). Zero-norm feature rows
// are excluded from the sum; T stays the full frame count.
LipreadingLoss lipreading_loss(const num::NodePtr& pred_frames,
                               const num::NodePtr& target_frames,
                               const LipFeatureExtractor& extractor);

// 1e-3 * mean over frames of the exact per-frame L2 norm of psi (T x 50).
num::NodePtr expression_reg(const num::NodePtr& psi);

struct LossFlags {
  bool use_pitch = true;
  bool use_energy = true;
  bool use_duration = true;
  bool use_spectrogram = true;
  bool use_flame = true;
  bool use_grad = true;
  bool use_flow = true;
  bool use_lipread = true;
  bool use_expr_reg = true;
};

// The lipreading term destabilizes training without the expression
// regularizer, so enabling it alone is a configuration error.
void validate_loss_flags(const LossFlags& flags);

// Component nodes of one training step; disabled terms stay null.
struct LossGraph {
  num::NodePtr pitch;
  num::NodePtr energy;
  num::NodePtr duration;
  num::NodePtr spectrogram;
  num::NodePtr flame;
  num::NodePtr grad;
  num::NodePtr flow;
  num::NodePtr lipread;
  num::NodePtr expr_reg;
};

struct LossBreakdown {
  double pitch = 0.0;
  double energy = 0.0;
  double duration = 0.0;
  double spectrogram = 0.0;
  double flame_mse = 0.0;
  double grad = 0.0;
  double flow = 0.0;
  double lipread = 0.0;
  double expr_reg = 0.0;
  double total = 0.0;
};

// Unweighted sum of the present components, built inside the graph so the
// total is exactly the sum node. Throws NumericError naming the first
// non-finite component.
num::NodePtr total_loss(const LossGraph& graph, LossBreakdown* breakdown = nullptr);

// One training-log line: {"step":N,"pitch":...,...,"total":...}.
std::string breakdown_json(long step, const LossBreakdown& b);

} // namespace neutart::loss
