#pragma once

#include <vector>

#include "neutart/tensor.hpp"

namespace neutart {

// Per-phoneme prosody track: pitch in Hz, spectral energy, and duration in
// mel frames. All three run over the same phoneme axis.
struct VarianceTargets {
  num::Tensor pitch;
  num::Tensor energy;
  std::vector<long> durations;

  long count() const { return pitch.size(); }
  long total_frames() const {
    long t = 0;
    for (long d : durations) t += d;
    return t;
  }
  // Throws ShapeError on ragged lengths, DataError on a negative duration.
  void validate() const;
};

} // namespace neutart
