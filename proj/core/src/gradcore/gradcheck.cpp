#include "deskasr/gradcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace deskasr::gradcore {

GradCheckReport grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, double h, double tol) {
  GradCheckReport report;
  report.tol = tol;

  for (auto& in : inputs) in.zero_grad();
  Tensor loss = fn(inputs);
  backward(loss);

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].requires_grad() && inputs[i].has_grad()) {
      analytic[i] = inputs[i].grad_copy();
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto& data = inputs[i].raw();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + h;
      const double fp = fn(inputs).item();
      data[j] = orig - h;
      const double fm = fn(inputs).item();
      data[j] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i].empty() ? 0.0 : analytic[i][j];
      const double rel = std::abs(a - numeric) /
                         std::max(std::abs(a) + std::abs(numeric), 1e-5);
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = i;
        report.worst_coord = j;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

std::string to_string(const GradCheckReport& r) {
  std::ostringstream os;
  os << (r.pass ? "pass" : "FAIL") << " max_rel_err=" << r.max_rel_err
     << " tol=" << r.tol << " coords=" << r.checked << " worst=input" << r.worst_input
     << "[" << r.worst_coord << "]";
  return os.str();
}

}  // namespace deskasr::gradcore
