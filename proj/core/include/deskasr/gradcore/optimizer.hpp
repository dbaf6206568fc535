#pragma once

#include <cstddef>
#include <vector>

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

enum class OptKind { kSgd, kNesterov, kAdam };

struct OptimizerConfig {
  OptKind kind = OptKind::kSgd;
  double learning_rate = 0.01;
  double momentum = 0.9;    // nesterov only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Deterministic parameter updates over a fixed parameter list.
//   sgd:      p -= lr * g
//   nesterov: v = mu*v + g; p -= lr * (g + mu*v)
//   adam:     bias-corrected first/second moments, p -= lr * m^ / (sqrt(v^) + eps)
// Hyperparameters are fixed at construction; step count only increases.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t step_count() const { return step_; }

  // Applies one update using each parameter's accumulated gradient. Throws
  // ConsistencyError if any parameter is missing a gradient, and binds the
  // slot layout to the first call's parameter list.
  void step(std::vector<Tensor>& params);

 private:
  OptimizerConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> slot1_;  // momentum / first moment
  std::vector<std::vector<double>> slot2_;  // second moment
};

}  // namespace deskasr::gradcore
