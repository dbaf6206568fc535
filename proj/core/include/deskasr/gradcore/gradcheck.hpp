#pragma once

#include <functional>
#include <string>
#include <vector>

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  std::size_t checked = 0;
  bool pass = false;
  double tol = 0.0;
};

// Central-difference check of d(fn)/d(inputs) for a scalar-valued fn.
// Only inputs with requires_grad set are perturbed. Relative error per
// coordinate is |a - n| / max(|a| + |n|, 1e-5); the floor turns the check
// into an absolute one for near-zero gradients, where the quotient would
// only measure fp roundoff of the loss evaluation.
GradCheckReport grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, double h = 1e-5,
                           double tol = 1e-5);

std::string to_string(const GradCheckReport& r);

}  // namespace deskasr::gradcore
