#pragma once

#include <cstdint>
#include <vector>

#include "deskasr/gradcore/rng.hpp"

namespace deskasr::corpus {

struct BalancingConfig {
  double exponent = 0.8;  // gamma in (0, 1]
};

// Draws class ids with probability proportional to count^gamma. Classes with
// zero count are excluded (recorded in excluded()).
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<std::size_t>& counts, const BalancingConfig& cfg,
                  std::uint64_t seed);

  int next();
  const std::vector<double>& weights() const { return weights_; }  // normalized
  const std::vector<int>& excluded() const { return excluded_; }

 private:
  std::vector<double> cumulative_;
  std::vector<double> weights_;
  std::vector<int> classes_;
  std::vector<int> excluded_;
  gradcore::Rng rng_;
};

}  // namespace deskasr::corpus
