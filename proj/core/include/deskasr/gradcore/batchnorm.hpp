#pragma once

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

enum class BnMode { kTrain, kEval };

// Batch normalization for B x C x F x T maps with statistics accumulated per
// feature map and per frequency bin, i.e. one (mean, var) pair per (c, f)
// shared over batch and time. Running statistics follow
// running = (1 - momentum) * running + momentum * batch.
class BatchNormFreq {
 public:
  BatchNormFreq() = default;
  BatchNormFreq(std::size_t channels, std::size_t freq_bins, double eps = 1e-5,
                double momentum = 0.1);

  Tensor forward(const Tensor& input, BnMode mode);

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }

  std::size_t channels() const { return channels_; }
  std::size_t freq_bins() const { return freq_bins_; }
  bool initialized() const { return initialized_; }

  // Running buffers, exposed for checkpointing (length C*F each).
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }
  void mark_initialized() { initialized_ = true; }

 private:
  std::size_t channels_ = 0;
  std::size_t freq_bins_ = 0;
  double eps_ = 1e-5;
  double momentum_ = 0.1;
  Tensor gamma_, beta_;  // shape {C, F}
  std::vector<double> running_mean_, running_var_;
  bool initialized_ = false;
};

}  // namespace deskasr::gradcore
