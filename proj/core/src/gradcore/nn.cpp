#include "deskasr/gradcore/nn.hpp"

#include <cmath>

namespace deskasr::gradcore {

Tensor init_uniform(Shape shape, double r, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-r, r);
  return Tensor::from(std::move(shape), std::move(data), true);
}

Linear::Linear(std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  const double r = 1.0 / std::sqrt(static_cast<double>(in));
  W_ = init_uniform({in, out}, r, rng);
  b_ = Tensor::zeros({out}, true);
}

void Linear::collect(ParamMap& params, const std::string& prefix) const {
  params.add(prefix + ".W", W_);
  params.add(prefix + ".b", b_);
}

LstmLayer::LstmLayer(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed)
    : hidden_(hidden_dim) {
  Rng rng(seed);
  const double r = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim));
  W_ = init_uniform({input_dim + hidden_dim, 4 * hidden_dim}, r, rng);
  std::vector<double> bias(4 * hidden_dim, 0.0);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) bias[j] = 1.0;
  b_ = Tensor::from({4 * hidden_dim}, std::move(bias), true);
}

LstmLayer::State LstmLayer::initial_state(std::size_t batch) const {
  return {Tensor::zeros({batch, hidden_}), Tensor::zeros({batch, hidden_})};
}

LstmLayer::State LstmLayer::step(const Tensor& x_t, const State& prev) const {
  const std::size_t H = hidden_;
  Tensor gates = add_rows(matmul(concat_cols(x_t, prev.h), W_), b_);
  Tensor i = sigmoid(slice_cols(gates, 0, H));
  Tensor f = sigmoid(slice_cols(gates, H, 2 * H));
  Tensor g = tanh_op(slice_cols(gates, 2 * H, 3 * H));
  Tensor o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh_op(c));
  return {h, c};
}

std::vector<Tensor> LstmLayer::run(const std::vector<Tensor>& steps) const {
  std::vector<Tensor> out;
  out.reserve(steps.size());
  State s = initial_state(steps.empty() ? 1 : steps[0].dim(0));
  for (const auto& x : steps) {
    s = step(x, s);
    out.push_back(s.h);
  }
  return out;
}

void LstmLayer::collect(ParamMap& params, const std::string& prefix) const {
  params.add(prefix + ".W", W_);
  params.add(prefix + ".b", b_);
}

Tensor Dropout::apply(const Tensor& x, bool train) {
  if (!train || rate_ <= 0.0) return x;
  std::vector<double> mask(x.size());
  const double keep = 1.0 - rate_;
  for (auto& m : mask) m = rng_.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace deskasr::gradcore
