#include "deskasr/gradcore/optimizer.hpp"

#include <cmath>
#include <string>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

void Optimizer::step(std::vector<Tensor>& params) {
  if (slot1_.empty()) {
    slot1_.resize(params.size());
    slot2_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slot1_[i].assign(params[i].size(), 0.0);
      if (cfg_.kind == OptKind::kAdam) slot2_[i].assign(params[i].size(), 0.0);
    }
  }
  if (slot1_.size() != params.size()) {
    throw ConsistencyError("optimizer: parameter list changed between steps");
  }
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) {
      throw ConsistencyError("optimizer: parameter " + std::to_string(i) +
                             " has no gradient");
    }
    auto g = p.grad();
    auto& v = p.raw();
    switch (cfg_.kind) {
      case OptKind::kSgd:
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= cfg_.learning_rate * g[j];
        break;
      case OptKind::kNesterov: {
        auto& mom = slot1_[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
          mom[j] = cfg_.momentum * mom[j] + g[j];
          v[j] -= cfg_.learning_rate * (g[j] + cfg_.momentum * mom[j]);
        }
        break;
      }
      case OptKind::kAdam: {
        auto& m = slot1_[i];
        auto& s = slot2_[i];
        const double b1t = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step_));
        const double b2t = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step_));
        for (std::size_t j = 0; j < v.size(); ++j) {
          m[j] = cfg_.adam_beta1 * m[j] + (1.0 - cfg_.adam_beta1) * g[j];
          s[j] = cfg_.adam_beta2 * s[j] + (1.0 - cfg_.adam_beta2) * g[j] * g[j];
          const double mhat = m[j] / b1t;
          const double shat = s[j] / b2t;
          v[j] -= cfg_.learning_rate * mhat / (std::sqrt(shat) + cfg_.adam_eps);
        }
        break;
      }
    }
  }
}

}  // namespace deskasr::gradcore
