#pragma once

#include <memory>
#include <string>
#include <vector>

#include "deskasr/lm/vocab.hpp"

namespace deskasr::lm {

struct InterpolationResult {
  std::vector<double> weights;
  std::vector<double> log_likelihoods;  // one per EM iteration
};

// EM for the linear mixture p(w|h) = sum_i w_i p_i(w|h) on heldout events
// (every word plus the sentence end). The objective is concave in the
// weights; the log-likelihood is asserted non-decreasing per iteration.
InterpolationResult tune_interpolation(const std::vector<const LmScorer*>& scorers,
                                       const std::vector<std::vector<std::string>>& heldout,
                                       std::size_t iterations = 100);

// Linear mixture of scorers sharing one vocabulary.
class InterpolatedLm : public LmScorer {
 public:
  InterpolatedLm(std::vector<const LmScorer*> scorers, std::vector<double> weights);

  const Vocab& vocab() const override { return scorers_[0]->vocab(); }
  std::string name() const override { return "interpolated"; }
  std::vector<double> next_distribution(const std::vector<int>& history) const override;
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<const LmScorer*> scorers_;
  std::vector<double> weights_;
};

void save_weights(const std::vector<std::string>& names,
                  const std::vector<double>& weights, const std::string& path);
std::vector<std::pair<std::string, double>> load_weights(const std::string& path);

}  // namespace deskasr::lm
