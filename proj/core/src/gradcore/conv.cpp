#include "deskasr/gradcore/conv.hpp"

#include <string>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

namespace {
using detail::Node;

struct ConvGeom {
  std::size_t B, C, F, T, O, kF, kT;
  std::size_t F_out, T_out;
  std::size_t pad_lo;  // leading frequency pad
  Conv2dOptions opt;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernels,
                       const Conv2dOptions& opt) {
  if (input.ndim() != 4) {
    throw DimensionError("conv2d: input must be B x C x F x T, got " +
                         shape_str(input.shape()));
  }
  if (kernels.ndim() != 4 || kernels.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: kernels " + shape_str(kernels.shape()) +
                         " incompatible with input " + shape_str(input.shape()));
  }
  ConvGeom g;
  g.opt = opt;
  g.B = input.dim(0);
  g.C = input.dim(1);
  g.F = input.dim(2);
  g.T = input.dim(3);
  g.O = kernels.dim(0);
  g.kF = kernels.dim(2);
  g.kT = kernels.dim(3);

  const std::size_t span_t = opt.dil_t * (g.kT - 1) + 1;
  if (g.T < span_t) {
    throw ContextError("conv2d: time extent " + std::to_string(g.T) +
                       " shorter than receptive span; need at least " +
                       std::to_string(span_t) + " frames");
  }
  g.T_out = (g.T - span_t) / opt.stride_t + 1;

  const std::size_t span_f = opt.dil_f * (g.kF - 1) + 1;
  if (opt.pad_freq == FreqPad::kSame) {
    g.F_out = (g.F + opt.stride_f - 1) / opt.stride_f;
    const std::size_t needed = (g.F_out - 1) * opt.stride_f + span_f;
    const std::size_t pad_total = needed > g.F ? needed - g.F : 0;
    g.pad_lo = pad_total / 2;
  } else {
    if (g.F < span_f) {
      throw DimensionError("conv2d: frequency extent " + std::to_string(g.F) +
                           " shorter than kernel span " + std::to_string(span_f));
    }
    g.F_out = (g.F - span_f) / opt.stride_f + 1;
    g.pad_lo = 0;
  }
  return g;
}

}  // namespace

std::size_t conv_out_time(std::size_t T, std::size_t kT, std::size_t stride_t,
                          std::size_t dil_t) {
  const std::size_t span = dil_t * (kT - 1) + 1;
  if (T < span) {
    throw ContextError("conv output time undefined: T=" + std::to_string(T) +
                       " < required " + std::to_string(span));
  }
  return (T - span) / stride_t + 1;
}

std::size_t conv_min_time(std::size_t kT, std::size_t dil_t) {
  return dil_t * (kT - 1) + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dOptions& opt) {
  const ConvGeom g = conv_geometry(input, kernels, opt);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != g.O)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(g.O) + " kernels");
  }

  auto in = input.value();
  auto ker = kernels.value();
  std::vector<double> out(g.B * g.O * g.F_out * g.T_out, 0.0);

  for (std::size_t b = 0; b < g.B; ++b) {
    for (std::size_t o = 0; o < g.O; ++o) {
      const double bias_v = has_bias ? bias.value()[o] : 0.0;
      for (std::size_t fo = 0; fo < g.F_out; ++fo) {
        for (std::size_t to = 0; to < g.T_out; ++to) {
          double acc = bias_v;
          for (std::size_t c = 0; c < g.C; ++c) {
            for (std::size_t kf = 0; kf < g.kF; ++kf) {
              const std::ptrdiff_t fi =
                  static_cast<std::ptrdiff_t>(fo * g.opt.stride_f + kf * g.opt.dil_f) -
                  static_cast<std::ptrdiff_t>(g.pad_lo);
              if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(g.F)) continue;
              const std::size_t in_base =
                  ((b * g.C + c) * g.F + static_cast<std::size_t>(fi)) * g.T;
              const std::size_t ker_base = ((o * g.C + c) * g.kF + kf) * g.kT;
              const std::size_t ti0 = to * g.opt.stride_t;
              for (std::size_t kt = 0; kt < g.kT; ++kt) {
                acc += in[in_base + ti0 + kt * g.opt.dil_t] * ker[ker_base + kt];
              }
            }
          }
          out[((b * g.O + o) * g.F_out + fo) * g.T_out + to] = acc;
        }
      }
    }
  }

  std::vector<Tensor> parents{input, kernels};
  if (has_bias) parents.push_back(bias);
  return make_op({g.B, g.O, g.F_out, g.T_out}, std::move(out), std::move(parents),
                 [g, has_bias](Node& n) {
                   auto& pin = n.parents[0];
                   auto& pker = n.parents[1];
                   const bool din = pin->requires_grad;
                   const bool dker = pker->requires_grad;
                   if (din) pin->ensure_grad();
                   if (dker) pker->ensure_grad();
                   Node* pbias = nullptr;
                   if (has_bias && n.parents[2]->requires_grad) {
                     pbias = n.parents[2].get();
                     pbias->ensure_grad();
                   }
                   for (std::size_t b = 0; b < g.B; ++b) {
                     for (std::size_t o = 0; o < g.O; ++o) {
                       for (std::size_t fo = 0; fo < g.F_out; ++fo) {
                         for (std::size_t to = 0; to < g.T_out; ++to) {
                           const double gy =
                               n.grad[((b * g.O + o) * g.F_out + fo) * g.T_out + to];
                           if (gy == 0.0) continue;
                           if (pbias) pbias->grad[o] += gy;
                           for (std::size_t c = 0; c < g.C; ++c) {
                             for (std::size_t kf = 0; kf < g.kF; ++kf) {
                               const std::ptrdiff_t fi =
                                   static_cast<std::ptrdiff_t>(fo * g.opt.stride_f +
                                                               kf * g.opt.dil_f) -
                                   static_cast<std::ptrdiff_t>(g.pad_lo);
                               if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(g.F))
                                 continue;
                               const std::size_t in_base =
                                   ((b * g.C + c) * g.F + static_cast<std::size_t>(fi)) *
                                   g.T;
                               const std::size_t ker_base =
                                   ((o * g.C + c) * g.kF + kf) * g.kT;
                               const std::size_t ti0 = to * g.opt.stride_t;
                               for (std::size_t kt = 0; kt < g.kT; ++kt) {
                                 const std::size_t ii = in_base + ti0 + kt * g.opt.dil_t;
                                 if (din) pin->grad[ii] += gy * pker->value[ker_base + kt];
                                 if (dker) pker->grad[ker_base + kt] += gy * pin->value[ii];
                               }
                             }
                           }
                         }
                       }
                     }
                   }
                 });
}

Tensor maxpool2d(const Tensor& input, const Pool2dOptions& opt) {
  if (input.ndim() != 4) {
    throw DimensionError("maxpool2d: input must be B x C x F x T, got " +
                         shape_str(input.shape()));
  }
  const std::size_t B = input.dim(0), C = input.dim(1), F = input.dim(2),
                    T = input.dim(3);
  const std::size_t span_t = opt.dil_t * (opt.win_t - 1) + 1;
  if (opt.win_f > F || span_t > T) {
    throw DimensionError("maxpool2d: window " + std::to_string(opt.win_f) + "x" +
                         std::to_string(opt.win_t) + " (time dilation " +
                         std::to_string(opt.dil_t) + ") exceeds extent " +
                         std::to_string(F) + "x" + std::to_string(T));
  }
  const std::size_t F_out = (F - opt.win_f) / opt.stride_f + 1;
  const std::size_t T_out = (T - span_t) / opt.stride_t + 1;

  auto in = input.value();
  std::vector<double> out(B * C * F_out * T_out);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t fo = 0; fo < F_out; ++fo) {
        for (std::size_t to = 0; to < T_out; ++to) {
          double best = 0.0;
          std::size_t best_i = 0;
          bool first = true;
          for (std::size_t kf = 0; kf < opt.win_f; ++kf) {
            for (std::size_t kt = 0; kt < opt.win_t; ++kt) {
              const std::size_t fi = fo * opt.stride_f + kf;
              const std::size_t ti = to * opt.stride_t + kt * opt.dil_t;
              const std::size_t ii = ((b * C + c) * F + fi) * T + ti;
              if (first || in[ii] > best) {
                best = in[ii];
                best_i = ii;
                first = false;
              }
            }
          }
          const std::size_t oi = ((b * C + c) * F_out + fo) * T_out + to;
          out[oi] = best;
          argmax[oi] = best_i;
        }
      }
    }
  }
  return make_op({B, C, F_out, T_out}, std::move(out), {input},
                 [argmax = std::move(argmax)](Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (std::size_t i = 0; i < n.grad.size(); ++i)
                     p->grad[argmax[i]] += n.grad[i];
                 });
}

Tensor crop_time(const Tensor& input, std::size_t lo, std::size_t hi) {
  if (input.ndim() != 4) {
    throw DimensionError("crop_time: input must be B x C x F x T");
  }
  const std::size_t B = input.dim(0), C = input.dim(1), F = input.dim(2),
                    T = input.dim(3);
  if (lo + hi >= T) {
    throw CropError("crop_time: cropping " + std::to_string(lo) + "+" +
                    std::to_string(hi) + " frames from " + std::to_string(T));
  }
  const std::size_t T_out = T - lo - hi;
  auto in = input.value();
  std::vector<double> out(B * C * F * T_out);
  for (std::size_t m = 0; m < B * C * F; ++m) {
    std::copy_n(in.begin() + m * T + lo, T_out, out.begin() + m * T_out);
  }
  return make_op({B, C, F, T_out}, std::move(out), {input}, [T, T_out, lo](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t maps = n.grad.size() / T_out;
    for (std::size_t m = 0; m < maps; ++m)
      for (std::size_t t = 0; t < T_out; ++t)
        p->grad[m * T + lo + t] += n.grad[m * T_out + t];
  });
}

Tensor crop_time_symmetric(const Tensor& input, std::size_t target_T) {
  if (input.ndim() != 4) {
    throw DimensionError("crop_time_symmetric: input must be B x C x F x T");
  }
  const std::size_t T = input.dim(3);
  if (target_T > T || (T - target_T) % 2 != 0) {
    throw CropError("crop_time_symmetric: cannot crop " + std::to_string(T) +
                    " frames to " + std::to_string(target_T) +
                    " (difference must be even and nonnegative)");
  }
  const std::size_t edge = (T - target_T) / 2;
  if (edge == 0) return input;
  return crop_time(input, edge, edge);
}

}  // namespace deskasr::gradcore
