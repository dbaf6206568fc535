#pragma once

#include <map>
#include <string>
#include <vector>

#include "deskasr/lm/vocab.hpp"

namespace deskasr::lm {

struct NgramConfig {
  std::size_t order = 3;
  double discount = 0.75;  // absolute discount D in [0, 1)
  // Count </s> as a predicted event at each sentence end. Off reproduces
  // plain token-stream maximum likelihood.
  bool count_sentence_end = true;
};

// Interpolated absolute discounting:
//   p_n(w|h) = max(c(hw)-D, 0)/c(h) + D*types(h)/c(h) * p_{n-1}(w|h')
// backing off to the uniform distribution over the predictable vocabulary.
class NgramLm : public LmScorer {
 public:
  static NgramLm train(const std::vector<std::vector<std::string>>& sentences,
                       const NgramConfig& cfg);
  static NgramLm train_with_vocab(const std::vector<std::vector<std::string>>& sentences,
                                  const NgramConfig& cfg, const Vocab& vocab);

  const Vocab& vocab() const override { return vocab_; }
  std::string name() const override { return "ngram" + std::to_string(cfg_.order); }
  std::vector<double> next_distribution(const std::vector<int>& history) const override;
  double log_prob(const std::vector<int>& history, int word) const override;

  const NgramConfig& config() const { return cfg_; }

  void save(const std::string& path) const;
  static NgramLm load(const std::string& path);

 private:
  double prob(const std::vector<int>& history, int word, std::size_t level) const;

  struct Context {
    std::size_t total = 0;
    std::map<int, std::size_t> counts;
  };
  NgramConfig cfg_;
  Vocab vocab_;
  // contexts_[n] maps an n-word context to its continuation counts.
  std::vector<std::map<std::vector<int>, Context>> contexts_;
};

}  // namespace deskasr::lm
