#pragma once

#include <string>
#include <vector>

#include "neutart/autodiff.hpp"
#include "neutart/tensor.hpp"

namespace neutart::flame {

// Blendshape face model: linear identity/expression bases over a template
// mesh plus a single skinned jaw joint. Coefficient vectors are 53 wide:
// columns 0-2 jaw axis-angle (radians), 3-52 expression weights.
struct FlameAsset {
  long vertex_count = 0;   // V
  long expr_count = 0;     // columns of the expression basis
  long identity_count = 0; // columns of the identity (shape) basis
  num::Tensor template_vertices;  // V x 3, meters
  num::Tensor expression_basis;   // V x 3 x expr_count, row-major [v][axis][e]
  num::Tensor shape_basis;        // V x 3 x identity_count
  num::Tensor jaw_weights;        // V, in [0, 1]
  num::Tensor jaw_joint;          // 3
  std::vector<long> lip_landmark_ids;
};

struct FaceMesh {
  num::Tensor vertices; // V x 3
};

inline constexpr long kJawChannels = 3;
inline constexpr long kExpressionChannels = 50;
inline constexpr long kFlameChannels = kJawChannels + kExpressionChannels;

// Per-utterance coefficient track. Jaw pose norms stay below pi so the
// axis-angle parameterization is unambiguous.
struct FlameFrameSequence {
  num::Tensor frames;        // T x 53
  num::Tensor identity_beta; // identity coefficients, fixed per speaker
  long frame_count() const { return frames.rows(); }
};

void save_flame_asset(const std::string& path, const FlameAsset& asset);
FlameAsset load_flame_asset(const std::string& path);

void save_flame_frames(const std::string& path, const FlameFrameSequence& seq);
FlameFrameSequence load_flame_frames(const std::string& path);

// Procedural asset for tests and the bundled corpus: a 10x10 vertex sheet
// with smooth sinusoidal bases, lower-lip vertices fully jaw-skinned and
// upper-lip vertices static.
FlameAsset make_synthetic_asset();

// 3x3 axis-angle rotation matrix.
num::Tensor rodrigues(double tx, double ty, double tz);

// Full blendshape + jaw skinning decode:
//   p  = template + shape*beta + expr*psi
//   p' = w * (R(theta)(p - j) + j) + (1 - w) * p
// theta with norm below 1e-12 skips the rotation entirely, so an all-zero
// frame reproduces the template bitwise.
FaceMesh decode_mesh(const num::Tensor& frame53, const num::Tensor& beta,
                     const FlameAsset& asset);

// Rows are the lip landmark vertices in asset id order.
num::Tensor lip_landmarks(const FaceMesh& mesh, const FlameAsset& asset);

// Differentiable decode of only the lip landmark vertices. The context
// pre-folds everything constant for a fixed identity.
struct LipDecodeContext {
  num::Tensor base;          // L x 3, template + shape*beta at the landmarks
  num::NodePtr expr_basis;   // expr_count x 3L constant
  num::Tensor weights;       // L
  num::Tensor joint;         // 3
  long landmark_count = 0;
};

LipDecodeContext make_lip_context(const FlameAsset& asset, const num::Tensor& beta);

// frame: node of shape [53] or [1 x 53]; returns L x 3 landmark positions.
num::NodePtr decode_lip_landmarks(const LipDecodeContext& ctx,
                                  const num::NodePtr& frame);

} // namespace neutart::flame
