#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/batchnorm.hpp"
#include "deskasr/gradcore/checkpoint.hpp"
#include "deskasr/gradcore/conv.hpp"
#include "deskasr/gradcore/gradcheck.hpp"
#include "deskasr/gradcore/nn.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/optimizer.hpp"
#include "deskasr/gradcore/rng.hpp"
#include "deskasr/gradcore/tensor.hpp"

using namespace deskasr;
using namespace deskasr::gradcore;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
  Tensor I = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor v = Tensor::from({2, 1}, {3, 4});
  Tensor out = matmul(I, v);
  CHECK(out.value()[0] == 3.0);
  CHECK(out.value()[1] == 4.0);

  Tensor a = Tensor::from({1, 1}, {2});
  Tensor b = Tensor::from({1, 1}, {3});
  CHECK(matmul(a, b).item() == 6.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2x3)"), DimensionError);
}

TEST_CASE("matmul gradient vs central differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto fn = [](std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); };
  auto rep = grad_check(fn, {a, b}, 1e-5, 1e-6);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("elementwise basics") {
  Tensor z = Tensor::scalar(0.0);
  CHECK(sigmoid(z).item() == 0.5);
  CHECK(tanh_op(z).item() == 0.0);
  Tensor a = Tensor::from({3}, {1, -2, 3});
  Tensor b = Tensor::from({3}, {4, 5, -6});
  CHECK(add(a, b).value()[1] == 3.0);
  CHECK(mul(a, b).value()[2] == -18.0);
  CHECK(relu(a).value()[1] == 0.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({4})), DimensionError);
}

TEST_CASE("sigmoid gradient at 1.3 vs central difference") {
  Tensor x = Tensor::from({1}, {1.3}, true);
  auto fn = [](std::vector<Tensor>& in) { return sum(sigmoid(in[0])); };
  auto rep = grad_check(fn, {x}, 1e-5, 1e-6);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("elementwise gradients on random shapes") {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    Shape shape{2 + static_cast<std::size_t>(rng.below(3)),
                1 + static_cast<std::size_t>(rng.below(4))};
    Tensor a = random_tensor(shape, rng);
    Tensor b = random_tensor(shape, rng);
    auto fn = [](std::vector<Tensor>& in) {
      Tensor s = mul(sigmoid(in[0]), tanh_op(in[1]));
      return sum(add(s, relu(mul(in[0], in[1]))));
    };
    auto rep = grad_check(fn, {a, b}, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, to_string(rep));
  }
}

TEST_CASE("softmax cross entropy values") {
  Tensor logits = Tensor::zeros({1, 4});
  std::vector<int> target{2};
  CHECK(softmax_cross_entropy(logits, target).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // One-hot-correct logits: loss -> 0 as the margin grows.
  double prev = 1e9;
  for (double margin : {2.0, 5.0, 10.0, 20.0}) {
    Tensor l = Tensor::from({1, 3}, {margin, 0.0, 0.0});
    std::vector<int> t{0};
    const double loss = softmax_cross_entropy(l, t).item();
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("softmax cross entropy rejects out-of-range targets") {
  Tensor logits = Tensor::zeros({2, 3});
  std::vector<int> bad{1, 3};
  CHECK_THROWS_WITH_AS(softmax_cross_entropy(logits, bad), doctest::Contains("3"),
                       LabelError);
}

TEST_CASE("softmax cross entropy gradient vs central differences") {
  Rng rng(17);
  Tensor logits = random_tensor({5, 3}, rng);
  std::vector<int> targets{0, 2, 1, 1, 0};
  auto fn = [&](std::vector<Tensor>& in) {
    return softmax_cross_entropy(in[0], targets);
  };
  auto rep = grad_check(fn, {logits}, 1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("masked cross entropy equals loss on kept rows") {
  Rng rng(23);
  Tensor logits = random_tensor({4, 3}, rng, false);
  std::vector<int> targets{0, 1, 2, 1};
  std::vector<double> weights{1, 1, 0, 0};
  Tensor kept = slice_rows(logits, 0, 2);
  std::vector<int> kept_t{0, 1};
  CHECK(softmax_cross_entropy(logits, targets, weights).item() ==
        doctest::Approx(softmax_cross_entropy(kept, kept_t).item()).epsilon(1e-12));
}

TEST_CASE("mse values and gradient") {
  Tensor p = Tensor::from({2}, {0, 0});
  Tensor t = Tensor::from({2}, {1, 1});
  CHECK(mse(p, t).item() == 1.0);
  CHECK(mse(t, t).item() == 0.0);
  CHECK_THROWS_AS(mse(p, Tensor::zeros({3})), DimensionError);

  Rng rng(3);
  Tensor a = random_tensor({4, 7}, rng);
  Tensor b = random_tensor({4, 7}, rng, false);
  auto fn = [&](std::vector<Tensor>& in) { return mse(in[0], b); };
  auto rep = grad_check(fn, {a}, 1e-5, 1e-6);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("conv2d unpadded time lengths") {
  // T=7, k_t=3, dilation 2, stride 1 -> 3.
  CHECK(conv_out_time(7, 3, 1, 2) == 3);
  // Two stacked unpadded k_t=3 convs on T=21 -> 17.
  CHECK(conv_out_time(conv_out_time(21, 3, 1, 1), 3, 1, 1) == 17);
}

TEST_CASE("conv2d output length closed form sweep and context errors") {
  for (std::size_t T = 1; T <= 32; ++T) {
    for (std::size_t k : {1, 3, 5}) {
      for (std::size_t s : {1, 2}) {
        for (std::size_t d : {1, 2, 4}) {
          const std::size_t span = d * (k - 1) + 1;
          Tensor in = Tensor::full({1, 1, 1, T}, 0.5);
          Tensor ker = Tensor::full({1, 1, 1, k}, 1.0);
          Conv2dOptions opt{.stride_f = 1, .stride_t = s, .dil_t = d};
          if (T < span) {
            CHECK_THROWS_AS(conv2d(in, ker, Tensor(), opt), ContextError);
          } else {
            Tensor out = conv2d(in, ker, Tensor(), opt);
            CHECK(out.dim(3) == (T - span) / s + 1);
          }
        }
      }
    }
  }
}

TEST_CASE("conv2d same-padding keeps ceil(F/stride) bins") {
  Tensor in = Tensor::full({1, 2, 64, 5}, 0.25);
  Tensor ker = Tensor::full({3, 2, 3, 3}, 0.1);
  Conv2dOptions opt{.stride_f = 2, .stride_t = 1, .pad_freq = FreqPad::kSame};
  Tensor out = conv2d(in, ker, Tensor(), opt);
  CHECK(out.dim(1) == 3);
  CHECK(out.dim(2) == 32);
  CHECK(out.dim(3) == 3);
}

TEST_CASE("dilated conv equals phase-split oracle") {
  Rng rng(29);
  const std::size_t T = 12, k = 3;
  Tensor x = random_tensor({1, 1, 1, T}, rng, false);
  Tensor ker = random_tensor({1, 1, 1, k}, rng, false);
  Conv2dOptions dil_opt{.dil_t = 2};
  Tensor dilated = conv2d(x, ker, Tensor(), dil_opt);

  // Phase split: even/odd sub-sequences, stride-1 undilated conv, interleave.
  auto xv = x.value();
  std::vector<double> even, odd;
  for (std::size_t t = 0; t < T; ++t) (t % 2 == 0 ? even : odd).push_back(xv[t]);
  Tensor xe = Tensor::from({1, 1, 1, even.size()}, even);
  Tensor xo = Tensor::from({1, 1, 1, odd.size()}, odd);
  Tensor ye = conv2d(xe, ker, Tensor(), Conv2dOptions{});
  Tensor yo = conv2d(xo, ker, Tensor(), Conv2dOptions{});
  const std::size_t out_T = dilated.dim(3);
  double max_diff = 0.0;
  for (std::size_t t = 0; t < out_T; ++t) {
    const double oracle =
        t % 2 == 0 ? ye.value()[t / 2] : yo.value()[t / 2];
    max_diff = std::max(max_diff, std::abs(oracle - dilated.value()[t]));
  }
  CHECK(max_diff < 1e-12);
}

TEST_CASE("conv2d gradient vs central differences") {
  Rng rng(31);
  Tensor in = random_tensor({1, 2, 4, 6}, rng);
  Tensor ker = random_tensor({3, 2, 3, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  Conv2dOptions opt{.stride_f = 1, .stride_t = 1, .dil_t = 1,
                    .pad_freq = FreqPad::kSame};
  auto fn = [&](std::vector<Tensor>& p) {
    return mean(conv2d(p[0], p[1], p[2], opt));
  };
  auto rep = grad_check(fn, {in, ker, bias}, 1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, to_string(rep));

  Conv2dOptions strided{.stride_f = 2, .stride_t = 2, .dil_t = 2,
                        .pad_freq = FreqPad::kSame};
  Tensor in2 = random_tensor({2, 1, 4, 9}, rng);
  Tensor ker2 = random_tensor({2, 1, 3, 3}, rng);
  auto fn2 = [&](std::vector<Tensor>& p) {
    Tensor y = conv2d(p[0], p[1], Tensor(), strided);
    return mse(y, Tensor::zeros(y.shape()));
  };
  auto rep2 = grad_check(fn2, {in2, ker2}, 1e-5, 1e-5);
  CHECK_MESSAGE(rep2.pass, to_string(rep2));
}

TEST_CASE("maxpool basics and tie handling") {
  Tensor x = Tensor::from({1, 1, 1, 4}, {1, 3, 2, 4});
  Pool2dOptions opt{.win_t = 2, .stride_t = 2};
  Tensor y = maxpool2d(x, opt);
  CHECK(y.dim(3) == 2);
  CHECK(y.value()[0] == 3.0);
  CHECK(y.value()[1] == 4.0);

  // Constant input: gradient goes to the first (lowest linear index) element.
  Tensor c = Tensor::full({1, 1, 1, 4}, 2.5, true);
  Tensor yc = maxpool2d(c, opt);
  CHECK(yc.value()[0] == 2.5);
  backward(sum(yc));
  auto g = c.grad();
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
  CHECK(g[3] == 0.0);

  CHECK_THROWS_AS(maxpool2d(x, Pool2dOptions{.win_t = 5}), DimensionError);
}

TEST_CASE("dilated maxpool equals phase-split oracle") {
  Rng rng(37);
  const std::size_t T = 11;
  Tensor x = random_tensor({1, 1, 1, T}, rng, false);
  Tensor dil = maxpool2d(x, Pool2dOptions{.win_t = 2, .dil_t = 2});
  auto xv = x.value();
  std::vector<double> even, odd;
  for (std::size_t t = 0; t < T; ++t) (t % 2 == 0 ? even : odd).push_back(xv[t]);
  Tensor ye = maxpool2d(Tensor::from({1, 1, 1, even.size()}, even),
                        Pool2dOptions{.win_t = 2});
  Tensor yo = maxpool2d(Tensor::from({1, 1, 1, odd.size()}, odd),
                        Pool2dOptions{.win_t = 2});
  for (std::size_t t = 0; t < dil.dim(3); ++t) {
    const double oracle = t % 2 == 0 ? ye.value()[t / 2] : yo.value()[t / 2];
    CHECK(dil.value()[t] == oracle);
  }
}

TEST_CASE("maxpool gradient vs central differences") {
  Rng rng(41);  // random values: no ties, subgradient well-defined
  Tensor x = random_tensor({1, 2, 4, 6}, rng);
  Pool2dOptions opt{.win_f = 2, .win_t = 2, .stride_f = 2, .stride_t = 1};
  auto fn = [&](std::vector<Tensor>& p) { return mean(maxpool2d(p[0], opt)); };
  auto rep = grad_check(fn, {x}, 1e-6, 1e-5);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("crop_time_symmetric") {
  Tensor x = Tensor::from({1, 1, 1, 21},
                          std::vector<double>(21, 0.0));
  for (std::size_t t = 0; t < 21; ++t) x.raw()[t] = static_cast<double>(t);
  Tensor y = crop_time_symmetric(x, 17);
  CHECK(y.dim(3) == 17);
  CHECK(y.value()[0] == 2.0);
  CHECK(y.value()[16] == 18.0);
  Tensor same = crop_time_symmetric(x, 21);
  CHECK(same.value()[20] == 20.0);
  CHECK_THROWS_AS(crop_time_symmetric(x, 18), CropError);  // odd difference
  CHECK_THROWS_AS(crop_time_symmetric(x, 23), CropError);  // negative
}

TEST_CASE("batchnorm train statistics per (c,f) slice") {
  Rng rng(43);
  BatchNormFreq bn(2, 3);
  Tensor x = random_tensor({2, 2, 3, 5}, rng, false);
  Tensor y = bn.forward(x, BnMode::kTrain);
  const std::size_t B = 2, C = 2, F = 3, T = 5;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t f = 0; f < F; ++f) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
          const double v = y.value()[((b * C + c) * F + f) * T + t];
          s += v;
          s2 += v * v;
        }
      }
      const double m = s / (B * T);
      const double var = s2 / (B * T) - m * m;
      CHECK(std::abs(m) < 1e-10);
      CHECK(std::abs(var - 1.0) < 1e-4);  // epsilon shifts variance slightly
    }
  }
}

TEST_CASE("batchnorm constant slice maps to zero and eval-before-train throws") {
  BatchNormFreq bn(1, 1);
  Tensor x = Tensor::full({1, 1, 1, 6}, 3.25);
  CHECK_THROWS_AS(bn.forward(x, BnMode::kEval), ConsistencyError);
  Tensor y = bn.forward(x, BnMode::kTrain);
  for (double v : y.value()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("batchnorm gradient vs central differences") {
  Rng rng(47);
  Tensor x = random_tensor({1, 2, 2, 4}, rng);
  Tensor target = random_tensor({1, 2, 2, 4}, rng, false);
  auto fn = [&](std::vector<Tensor>& p) {
    BatchNormFreq local(2, 2);
    Tensor y = local.forward(p[0], BnMode::kTrain);
    return mse(y, target);
  };
  auto rep = grad_check(fn, {x}, 1e-5, 1e-4);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("optimizer sgd, adam zero-grad, nesterov oracle") {
  // sgd: p=1, g=2, lr=0.1 -> 0.8
  {
    Optimizer opt({.kind = OptKind::kSgd, .learning_rate = 0.1});
    std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
    backward(scale(params[0], 2.0));  // d/dp (2p) = 2
    opt.step(params);
    CHECK(params[0].item() == doctest::Approx(0.8).epsilon(1e-15));
  }
  // adam with g=0 from fresh state: parameter unchanged
  {
    Optimizer opt({.kind = OptKind::kAdam, .learning_rate = 0.1});
    std::vector<Tensor> params{Tensor::from({1}, {1.5}, true)};
    backward(scale(params[0], 0.0));
    opt.step(params);
    CHECK(params[0].item() == 1.5);
  }
  // nesterov: two analytic steps vs the hand-unrolled recurrence
  {
    const double lr = 0.2, mu = 0.9;
    const double g1 = 0.7, g2 = -0.3;
    Optimizer opt({.kind = OptKind::kNesterov, .learning_rate = lr, .momentum = mu});
    std::vector<Tensor> params{Tensor::from({1}, {2.0}, true)};
    backward(scale(params[0], g1));
    opt.step(params);
    params[0].zero_grad();
    backward(scale(params[0], g2));
    opt.step(params);

    double p = 2.0, v = 0.0;
    v = mu * v + g1;
    p -= lr * (g1 + mu * v);
    v = mu * v + g2;
    p -= lr * (g2 + mu * v);
    CHECK(params[0].item() == doctest::Approx(p).epsilon(1e-15));
  }
  // missing gradient -> consistency error
  {
    Optimizer opt({.kind = OptKind::kSgd, .learning_rate = 0.1});
    std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
    CHECK_THROWS_AS(opt.step(params), ConsistencyError);
  }
}

TEST_CASE("grad_check on sum of squares is tight") {
  Rng rng(53);
  Tensor x = random_tensor({6}, rng);
  auto fn = [](std::vector<Tensor>& p) { return sum(mul(p[0], p[0])); };
  auto rep = grad_check(fn, {x}, 1e-5, 1e-9);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("lstm cell loss on 3 frames passes gradient check") {
  Rng rng(59);
  LstmLayer lstm(3, 2, 1234);
  Linear head(2, 2, 999);
  std::vector<Tensor> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(random_tensor({1, 3}, rng, false));
  std::vector<int> targets{0, 1, 1};

  std::vector<Tensor> params{lstm.W_, lstm.b_, head.W_, head.b_};
  auto fn = [&](std::vector<Tensor>& p) {
    auto hs = lstm.run(frames);
    std::vector<Tensor> logits;
    for (auto& h : hs) logits.push_back(head.forward(h));
    return softmax_cross_entropy(concat_rows(logits), targets);
  };
  auto rep = grad_check(fn, params, 1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, to_string(rep));
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Rng rng(61);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor loss = mse(sigmoid(matmul(a, b)), Tensor::full({3, 3}, 0.25));
    backward(loss);
    std::vector<double> out{loss.item()};
    auto g = a.grad();
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("gradient reversal scales and negates") {
  Tensor x = Tensor::from({2}, {1.0, -2.0}, true);
  Tensor y = gradient_reversal(x, 0.5);
  CHECK(y.value()[0] == 1.0);
  backward(sum(y));
  CHECK(x.grad()[0] == -0.5);
  CHECK(x.grad()[1] == -0.5);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(67);
  ParamMap params;
  params.add("layer0.W", random_tensor({3, 4}, rng));
  params.add("layer0.b", random_tensor({4}, rng));
  params.add("head.W", random_tensor({4, 2}, rng));
  const std::string path = "test_ckpt_roundtrip.txt";
  save_checkpoint(path, params);

  ParamMap reload;
  reload.add("layer0.W", Tensor::zeros({3, 4}, true));
  reload.add("layer0.b", Tensor::zeros({4}, true));
  reload.add("head.W", Tensor::zeros({4, 2}, true));
  load_checkpoint(path, reload);
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    auto a = params.items[i].second.value();
    auto b = reload.items[i].second.value();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }

  ParamMap wrong;
  wrong.add("layer0.W", Tensor::zeros({4, 3}, true));
  wrong.add("layer0.b", Tensor::zeros({4}, true));
  wrong.add("head.W", Tensor::zeros({4, 2}, true));
  CHECK_THROWS_AS(load_checkpoint(path, wrong), DimensionError);
  std::remove(path.c_str());
}
