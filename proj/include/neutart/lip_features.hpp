#pragma once

#include "neutart/flame.hpp"
#include "neutart/losses.hpp"

namespace neutart::loss {

// Reference lip feature: decoded lip-landmark coordinates concatenated with
// their first differences (zero at the first frame). Stands in for a
// pretrained lipreading network; deterministic and differentiable, so the
// cosine-distance contract is exercised end to end.
class LandmarkMotionExtractor : public LipFeatureExtractor {
public:
  LandmarkMotionExtractor(const flame::FlameAsset& asset, const num::Tensor& identity_beta);

  // frames: T x 53 -> T x 6L (3L coordinates, 3L first differences).
  num::NodePtr extract(const num::NodePtr& frames) const override;

  long feature_dim() const { return 6 * ctx_.landmark_count; }

private:
  flame::LipDecodeContext ctx_;
};

} // namespace neutart::loss
