#pragma once

#include <vector>

#include "deskasr/fusion/frame_scores.hpp"

namespace deskasr::fusion {

enum class Pooling { kLogLinear, kLinear };

struct FusionConfig {
  std::vector<double> weights;  // one per model; normalized at construction
  Pooling pooling = Pooling::kLogLinear;

  // Normalizes in place; throws FusionError on negatives or a zero sum.
  void normalize();
};

// Frame-level score fusion. Log-linear pooling renormalizes the weighted sum
// of log-posteriors (a weighted geometric mean of the distributions); linear
// pooling mixes the posteriors themselves. All inputs must be frame-aligned
// with identical T and n_states.
FrameScores fuse(const std::vector<FrameScores>& models, const FusionConfig& cfg);

}  // namespace deskasr::fusion
