#include "neutart/lip_features.hpp"

#include <vector>

#include "neutart/errors.hpp"

namespace neutart::loss {

using num::NodePtr;
using num::Tensor;

LandmarkMotionExtractor::LandmarkMotionExtractor(const flame::FlameAsset& asset,
                                                 const num::Tensor& identity_beta)
    : ctx_(flame::make_lip_context(asset, identity_beta)) {
  if (ctx_.landmark_count == 0)
    throw DataError("lip features: the model asset has no lip landmarks");
}

num::NodePtr LandmarkMotionExtractor::extract(const num::NodePtr& frames) const {
  long t = frames->value.rows();
  if (t == 0 || frames->value.cols() != flame::kFlameChannels)
    throw ShapeError("lip features: expected T x " + std::to_string(flame::kFlameChannels) +
                     " frames, got " + frames->value.shape_str());
  long width = 3 * ctx_.landmark_count;
  std::vector<NodePtr> rows;
  rows.reserve(static_cast<size_t>(t));
  for (long i = 0; i < t; ++i) {
    auto landmarks = flame::decode_lip_landmarks(ctx_, num::slice_rows(frames, i, i + 1));
    rows.push_back(num::reshape(landmarks, {1, width}));
  }
  auto coords = num::stack_rows(rows);
  auto zero_row = num::constant(Tensor({1, width}));
  NodePtr diffs;
  if (t == 1) {
    diffs = zero_row;
  } else {
    auto deltas = num::sub(num::slice_rows(coords, 1, t), num::slice_rows(coords, 0, t - 1));
    diffs = num::concat(zero_row, deltas, 0);
  }
  return num::concat(coords, diffs, 1);
}

} // namespace neutart::loss
