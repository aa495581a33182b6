#include "neutart/losses.hpp"

#include <cmath>

#include "json.hpp"
#include "neutart/errors.hpp"

namespace neutart {

void VarianceTargets::validate() const {
  long n = pitch.size();
  if (energy.size() != n || static_cast<long>(durations.size()) != n)
    throw ShapeError("variance targets: ragged lengths (pitch " + std::to_string(n) +
                     ", energy " + std::to_string(energy.size()) + ", durations " +
                     std::to_string(durations.size()) + ")");
  for (size_t i = 0; i < durations.size(); ++i)
    if (durations[i] < 0)
      throw DataError("variance targets: negative duration at phoneme " + std::to_string(i));
}

} // namespace neutart

namespace neutart::loss {

using num::NodePtr;
using num::Tensor;

namespace {

Tensor log1p_tensor(const std::vector<long>& durations) {
  Tensor out({static_cast<long>(durations.size())});
  for (size_t i = 0; i < durations.size(); ++i)
    out[static_cast<long>(i)] = std::log1p(static_cast<double>(durations[i]));
  return out;
}

NodePtr mse(const NodePtr& pred, const Tensor& target) {
  return num::mean(num::square(num::sub(pred, num::constant(target))));
}

// x(t+1) - x(t) for a T x C node, T >= 2.
NodePtr frame_diffs(const NodePtr& x) {
  long t = x->value.rows();
  return num::sub(num::slice_rows(x, 1, t), num::slice_rows(x, 0, t - 1));
}

} // namespace

VarianceLossNodes variance_losses(const NodePtr& pred_pitch, const NodePtr& pred_energy,
                                  const NodePtr& pred_log_duration,
                                  const VarianceTargets& target) {
  target.validate();
  long n = target.count();
  if (n == 0) throw ShapeError("variance loss: empty sequences");
  if (pred_pitch->value.size() != n || pred_energy->value.size() != n ||
      pred_log_duration->value.size() != n)
    throw ShapeError("variance loss: prediction length mismatch (target has " +
                     std::to_string(n) + " phonemes)");
  VarianceLossNodes out;
  out.pitch = mse(pred_pitch, target.pitch);
  out.energy = mse(pred_energy, target.energy);
  out.duration = mse(pred_log_duration, log1p_tensor(target.durations));
  return out;
}

VarianceLossValues variance_losses(const VarianceTargets& pred, const VarianceTargets& target) {
  pred.validate();
  target.validate();
  if (pred.count() != target.count())
    throw ShapeError("variance loss: length mismatch (" + std::to_string(pred.count()) +
                     " vs " + std::to_string(target.count()) + " phonemes)");
  long n = target.count();
  if (n == 0) throw ShapeError("variance loss: empty sequences");
  VarianceLossValues out;
  for (long i = 0; i < n; ++i) {
    double dp = pred.pitch[i] - target.pitch[i];
    double de = pred.energy[i] - target.energy[i];
    double dd = std::log1p(static_cast<double>(pred.durations[static_cast<size_t>(i)])) -
                std::log1p(static_cast<double>(target.durations[static_cast<size_t>(i)]));
    out.pitch += dp * dp;
    out.energy += de * de;
    out.duration += dd * dd;
  }
  out.pitch /= static_cast<double>(n);
  out.energy /= static_cast<double>(n);
  out.duration /= static_cast<double>(n);
  return out;
}

NodePtr spectrogram_loss(const NodePtr& pred, const NodePtr& target) {
  if (pred->value.size() == 0) throw ShapeError("spectrogram loss: empty input");
  return num::mean(num::abs(num::sub(pred, target)));
}

NodePtr flame_mse(const NodePtr& pred, const NodePtr& target) {
  if (pred->value.size() == 0) throw ShapeError("coefficient loss: empty input");
  return num::mean(num::square(num::sub(pred, target)));
}

NodePtr gradient_loss(const NodePtr& x) {
  long t = x->value.rows();
  if (t < 2)
    throw ShapeError("gradient loss: need at least 2 frames, got " + std::to_string(t));
  return num::div(num::sum(num::square(frame_diffs(x))), static_cast<double>(t));
}

NodePtr flow_loss(const NodePtr& pred, const NodePtr& target) {
  if (!pred->value.same_shape(target->value))
    throw ShapeError("flow loss: shape mismatch " + pred->value.shape_str() + " vs " +
                     target->value.shape_str());
  long t = pred->value.rows();
  if (t < 2) throw ShapeError("flow loss: need at least 2 frames, got " + std::to_string(t));
  auto residual = num::sub(frame_diffs(pred), frame_diffs(target));
  return num::div(num::sum(num::square(residual)), static_cast<double>(t));
}

LipreadingLoss lipreading_loss(const NodePtr& pred_frames, const NodePtr& target_frames,
                               const LipFeatureExtractor& extractor) {
  long t = pred_frames->value.rows();
  if (t == 0 || pred_frames->value.size() == 0)
    throw ShapeError("lipreading loss: zero-length input");
  if (target_frames->value.rows() != t)
    throw ShapeError("lipreading loss: length mismatch (" + std::to_string(t) + " vs " +
                     std::to_string(target_frames->value.rows()) + " frames)");
  auto fp = extractor.extract(pred_frames);
  auto fg = extractor.extract(target_frames);
  if (fp->value.rows() != t || fg->value.rows() != t)
    throw ShapeError("lipreading loss: extractor changed the frame count");

  // Rows with a zero-norm feature vector on either side have no defined
  // cosine; they are masked out of the sum and counted.
  auto row_norm = [](const Tensor& m, long row) {
    double acc = 0.0;
    for (long c = 0; c < m.cols(); ++c) acc += m.at(row, c) * m.at(row, c);
    return std::sqrt(acc);
  };
  LipreadingLoss out;
  Tensor mask({t});
  for (long i = 0; i < t; ++i) {
    bool ok = row_norm(fp->value, i) > 1e-12 && row_norm(fg->value, i) > 1e-12;
    mask[i] = ok ? 1.0 : 0.0;
    if (!ok) ++out.skipped_frames;
  }

  auto dot = num::row_sum(num::mul(fp, fg));
  auto np = num::sqrt(num::add(num::row_sum(num::square(fp)), 1e-24));
  auto ng = num::sqrt(num::add(num::row_sum(num::square(fg)), 1e-24));
  auto cosine = num::div(dot, num::mul(np, ng));
  auto terms = num::mul(num::constant(mask), num::sub(1.0, cosine));
  out.value = num::div(num::sum(terms), static_cast<double>(t));
  return out;
}

NodePtr expression_reg(const NodePtr& psi) {
  long t = psi->value.rows();
  if (t == 0 || psi->value.size() == 0) return num::constant(0.0);
  // All-zero frames contribute an exact 0; masking them keeps the norm's
  // gradient finite there.
  Tensor mask({t});
  for (long i = 0; i < t; ++i) {
    double acc = 0.0;
    for (long c = 0; c < psi->value.cols(); ++c) acc += psi->value.at(i, c) * psi->value.at(i, c);
    mask[i] = acc > 0.0 ? 1.0 : 0.0;
  }
  auto norms = num::sqrt(num::add(num::row_sum(num::square(psi)), 1e-24));
  return num::mul(num::mean(num::mul(num::constant(mask), norms)), 1e-3);
}

void validate_loss_flags(const LossFlags& flags) {
  if (flags.use_lipread && !flags.use_expr_reg)
    throw ConfigError(
        "loss configuration: the lipreading term requires the expression regularizer");
  if (!(flags.use_pitch || flags.use_energy || flags.use_duration || flags.use_spectrogram ||
        flags.use_flame || flags.use_grad || flags.use_flow || flags.use_lipread ||
        flags.use_expr_reg))
    throw ConfigError("loss configuration: every component is disabled");
}

NodePtr total_loss(const LossGraph& graph, LossBreakdown* breakdown) {
  const std::pair<const char*, const NodePtr*> components[] = {
      {"pitch", &graph.pitch},       {"energy", &graph.energy},
      {"duration", &graph.duration}, {"spectrogram", &graph.spectrogram},
      {"flame_mse", &graph.flame},   {"grad", &graph.grad},
      {"flow", &graph.flow},         {"lipread", &graph.lipread},
      {"expr_reg", &graph.expr_reg}};
  NodePtr total;
  for (const auto& [name, node] : components) {
    if (!*node) continue;
    double v = (*node)->value[0];
    if (!std::isfinite(v))
      throw NumericError("total loss: non-finite component '" + std::string(name) + "'");
    total = total ? num::add(total, *node) : *node;
  }
  if (!total) throw ConfigError("total loss: no components enabled");
  if (breakdown) {
    auto val = [](const NodePtr& n) { return n ? n->value[0] : 0.0; };
    breakdown->pitch = val(graph.pitch);
    breakdown->energy = val(graph.energy);
    breakdown->duration = val(graph.duration);
    breakdown->spectrogram = val(graph.spectrogram);
    breakdown->flame_mse = val(graph.flame);
    breakdown->grad = val(graph.grad);
    breakdown->flow = val(graph.flow);
    breakdown->lipread = val(graph.lipread);
    breakdown->expr_reg = val(graph.expr_reg);
    breakdown->total = total->value[0];
  }
  return total;
}

std::string breakdown_json(long step, const LossBreakdown& b) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["pitch"] = b.pitch;
  j["energy"] = b.energy;
  j["duration"] = b.duration;
  j["spectrogram"] = b.spectrogram;
  j["flame_mse"] = b.flame_mse;
  j["grad"] = b.grad;
  j["flow"] = b.flow;
  j["lipread"] = b.lipread;
  j["expr_reg"] = b.expr_reg;
  j["total"] = b.total;
  return j.dump();
}

} // namespace neutart::loss
