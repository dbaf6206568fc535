#include "deskasr/corpus/sampler.hpp"

#include <cmath>
#include <iostream>

#include "deskasr/errors.hpp"

namespace deskasr::corpus {

BalancedSampler::BalancedSampler(const std::vector<std::size_t>& counts,
                                 const BalancingConfig& cfg, std::uint64_t seed)
    : rng_(seed) {
  if (cfg.exponent <= 0.0 || cfg.exponent > 1.0) {
    throw ConfigError("balanced_sampler: exponent must lie in (0, 1]");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      excluded_.push_back(static_cast<int>(c));
      continue;
    }
    const double w = std::pow(static_cast<double>(counts[c]), cfg.exponent);
    classes_.push_back(static_cast<int>(c));
    weights_.push_back(w);
    total += w;
  }
  if (classes_.empty()) {
    throw ConfigError("balanced_sampler: every class has zero count");
  }
  if (!excluded_.empty()) {
    std::cerr << "balanced_sampler: excluding " << excluded_.size()
              << " zero-count classes\n";
  }
  cumulative_.resize(weights_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    weights_[i] /= total;
    acc += weights_[i];
    cumulative_[i] = acc;
  }
  cumulative_.back() = 1.0;
}

int BalancedSampler::next() {
  const double u = rng_.uniform();
  std::size_t lo = 0, hi = cumulative_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (u < cumulative_[mid]) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return classes_[lo];
}

}  // namespace deskasr::corpus
