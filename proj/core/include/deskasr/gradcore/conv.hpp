#pragma once

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

enum class FreqPad { kSame, kNone };

struct Conv2dOptions {
  std::size_t stride_f = 1;
  std::size_t stride_t = 1;
  std::size_t dil_f = 1;
  std::size_t dil_t = 1;
  FreqPad pad_freq = FreqPad::kNone;
};

// Sequence convolution on B x C x F x T maps. The frequency axis may be
// padded ("same" keeps ceil(F/stride_f) bins); the time axis is never padded,
// so T_out = floor((T - dil_t*(kT-1) - 1)/stride_t) + 1. Kernels are
// O x C x kF x kT; bias (length O) is optional (pass an undefined Tensor).
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dOptions& opt);

// Closed-form output extents for the options above.
std::size_t conv_out_time(std::size_t T, std::size_t kT, std::size_t stride_t,
                          std::size_t dil_t);
std::size_t conv_min_time(std::size_t kT, std::size_t dil_t);

struct Pool2dOptions {
  std::size_t win_f = 1;
  std::size_t win_t = 1;
  std::size_t stride_f = 1;
  std::size_t stride_t = 1;
  std::size_t dil_t = 1;
};

// Max pooling over B x C x F x T; gradient routes to the argmax, ties to the
// lowest linear index.
Tensor maxpool2d(const Tensor& input, const Pool2dOptions& opt);

// Drop `lo` leading and `hi` trailing frames of the time axis.
Tensor crop_time(const Tensor& input, std::size_t lo, std::size_t hi);

// Symmetric crop to target_T; the difference must be even and nonnegative.
Tensor crop_time_symmetric(const Tensor& input, std::size_t target_T);

}  // namespace deskasr::gradcore
