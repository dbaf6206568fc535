#pragma once

#include <string>
#include <vector>

#include "deskasr/gradcore/checkpoint.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/rng.hpp"
#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

// x: B x in  ->  B x out. Weights U(-r, r) with r = 1/sqrt(in).
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::uint64_t seed);

  Tensor forward(const Tensor& x) const { return add_rows(matmul(x, W_), b_); }
  void collect(ParamMap& params, const std::string& prefix) const;

  Tensor W_, b_;
};

// Single-direction LSTM over a frame sequence. Standard gate layout
// (input, forget, cell, output); forget gate bias initialized to 1.
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  struct State {
    Tensor h, c;  // B x H each
  };
  State initial_state(std::size_t batch) const;
  State step(const Tensor& x_t, const State& prev) const;

  // Runs over the steps in order; returns one B x H output per step.
  std::vector<Tensor> run(const std::vector<Tensor>& steps) const;

  std::size_t hidden_dim() const { return hidden_; }
  void collect(ParamMap& params, const std::string& prefix) const;

  Tensor W_;  // (input+hidden) x 4*hidden
  Tensor b_;  // 4*hidden

 private:
  std::size_t hidden_ = 0;
};

// Inverted dropout on activations between layers ("vertical"); never applied
// across time steps. Masks draw from their own stream.
class Dropout {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  Tensor apply(const Tensor& x, bool train);

 private:
  double rate_;
  Rng rng_;
};

Tensor init_uniform(Shape shape, double r, Rng& rng);

}  // namespace deskasr::gradcore
