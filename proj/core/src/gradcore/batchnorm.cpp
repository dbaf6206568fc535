#include "deskasr/gradcore/batchnorm.hpp"

#include <cmath>
#include <string>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

using detail::Node;

BatchNormFreq::BatchNormFreq(std::size_t channels, std::size_t freq_bins, double eps,
                             double momentum)
    : channels_(channels),
      freq_bins_(freq_bins),
      eps_(eps),
      momentum_(momentum),
      gamma_(Tensor::full({channels, freq_bins}, 1.0, true)),
      beta_(Tensor::zeros({channels, freq_bins}, true)),
      running_mean_(channels * freq_bins, 0.0),
      running_var_(channels * freq_bins, 1.0) {}

Tensor BatchNormFreq::forward(const Tensor& input, BnMode mode) {
  if (input.ndim() != 4 || input.dim(1) != channels_ || input.dim(2) != freq_bins_) {
    throw DimensionError("batchnorm_freq: input " + shape_str(input.shape()) +
                         " does not match statistics of " + std::to_string(channels_) +
                         "x" + std::to_string(freq_bins_));
  }
  const std::size_t B = input.dim(0), C = channels_, F = freq_bins_, T = input.dim(3);
  const std::size_t groups = C * F;
  const double count = static_cast<double>(B * T);

  std::vector<double> mean(groups), var(groups);
  if (mode == BnMode::kTrain) {
    auto in = input.value();
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = ((b * C + c) * F + f) * T;
          for (std::size_t t = 0; t < T; ++t) s += in[base + t];
        }
        const double m = s / count;
        double v = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = ((b * C + c) * F + f) * T;
          for (std::size_t t = 0; t < T; ++t) {
            const double d = in[base + t] - m;
            v += d * d;
          }
        }
        mean[c * F + f] = m;
        var[c * F + f] = v / count;
      }
    }
    for (std::size_t i = 0; i < groups; ++i) {
      if (!initialized_) {
        running_mean_[i] = mean[i];
        running_var_[i] = var[i];
      } else {
        running_mean_[i] = (1.0 - momentum_) * running_mean_[i] + momentum_ * mean[i];
        running_var_[i] = (1.0 - momentum_) * running_var_[i] + momentum_ * var[i];
      }
    }
    initialized_ = true;
  } else {
    if (!initialized_) {
      throw ConsistencyError(
          "batchnorm_freq: eval mode before any training step (running statistics "
          "uninitialized)");
    }
    mean = running_mean_;
    var = running_var_;
  }

  auto in = input.value();
  auto gv = gamma_.value();
  auto bv = beta_.value();
  std::vector<double> xhat(in.size());
  std::vector<double> out(in.size());
  std::vector<double> inv_std(groups);
  for (std::size_t i = 0; i < groups; ++i) inv_std[i] = 1.0 / std::sqrt(var[i] + eps_);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t gidx = c * F + f;
        const std::size_t base = ((b * C + c) * F + f) * T;
        for (std::size_t t = 0; t < T; ++t) {
          const double xn = (in[base + t] - mean[gidx]) * inv_std[gidx];
          xhat[base + t] = xn;
          out[base + t] = gv[gidx] * xn + bv[gidx];
        }
      }
    }
  }

  const bool train = mode == BnMode::kTrain;
  return make_op(
      input.shape(), std::move(out), {input, gamma_, beta_},
      [B, C, F, T, count, train, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& n) {
        auto& pin = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (pin->requires_grad) pin->ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t f = 0; f < F; ++f) {
            const std::size_t gidx = c * F + f;
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
              const std::size_t base = ((b * C + c) * F + f) * T;
              for (std::size_t t = 0; t < T; ++t) {
                sum_dy += n.grad[base + t];
                sum_dy_xhat += n.grad[base + t] * xhat[base + t];
              }
            }
            if (pg->requires_grad) pg->grad[gidx] += sum_dy_xhat;
            if (pb->requires_grad) pb->grad[gidx] += sum_dy;
            if (!pin->requires_grad) continue;
            const double gamma_v = pg->value[gidx];
            if (train) {
              // d x = gamma/std * (dy - mean(dy) - xhat * mean(dy*xhat))
              const double k1 = sum_dy / count;
              const double k2 = sum_dy_xhat / count;
              for (std::size_t b = 0; b < B; ++b) {
                const std::size_t base = ((b * C + c) * F + f) * T;
                for (std::size_t t = 0; t < T; ++t) {
                  pin->grad[base + t] += gamma_v * inv_std[gidx] *
                                         (n.grad[base + t] - k1 - xhat[base + t] * k2);
                }
              }
            } else {
              for (std::size_t b = 0; b < B; ++b) {
                const std::size_t base = ((b * C + c) * F + f) * T;
                for (std::size_t t = 0; t < T; ++t) {
                  pin->grad[base + t] += gamma_v * inv_std[gidx] * n.grad[base + t];
                }
              }
            }
          }
        }
      });
}

}  // namespace deskasr::gradcore
