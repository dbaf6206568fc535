#include "deskasr/fusion/fuse.hpp"

#include <cmath>
#include <string>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"

namespace deskasr::fusion {

void FusionConfig::normalize() {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw FusionError("fusion weights must be nonnegative");
    sum += w;
  }
  if (sum <= 0.0) throw FusionError("fusion weights sum to zero");
  for (double& w : weights) w /= sum;
}

FrameScores fuse(const std::vector<FrameScores>& models, const FusionConfig& cfg) {
  if (models.empty()) throw FusionError("fuse: no models");
  FusionConfig c = cfg;
  if (c.weights.empty()) c.weights.assign(models.size(), 1.0);
  if (c.weights.size() != models.size()) {
    throw FusionError("fuse: " + std::to_string(c.weights.size()) + " weights for " +
                      std::to_string(models.size()) + " models");
  }
  c.normalize();
  const std::size_t T = models[0].T, S = models[0].n_states;
  for (const auto& m : models) {
    if (m.T != T || m.n_states != S) {
      throw FusionError("fuse: model " + m.model_id + " has shape " +
                        std::to_string(m.T) + "x" + std::to_string(m.n_states) +
                        ", expected " + std::to_string(T) + "x" + std::to_string(S));
    }
  }

  FrameScores out;
  out.model_id = "fused";
  out.T = T;
  out.n_states = S;
  out.log_posteriors.assign(T * S, 0.0);

  if (c.pooling == Pooling::kLogLinear) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      const double w = c.weights[i];
      for (std::size_t j = 0; j < T * S; ++j) {
        out.log_posteriors[j] += w * models[i].log_posteriors[j];
      }
    }
  } else {
    for (std::size_t j = 0; j < T * S; ++j) {
      double p = 0.0;
      for (std::size_t i = 0; i < models.size(); ++i) {
        p += c.weights[i] * std::exp(models[i].log_posteriors[j]);
      }
      out.log_posteriors[j] = std::log(p);
    }
  }
  // Renormalize each row to a proper log-distribution.
  for (std::size_t t = 0; t < T; ++t) {
    const double lse = gradcore::log_sum_exp(
        std::span<const double>(out.log_posteriors.data() + t * S, S));
    for (std::size_t s = 0; s < S; ++s) out.log_posteriors[t * S + s] -= lse;
  }
  return out;
}

}  // namespace deskasr::fusion
