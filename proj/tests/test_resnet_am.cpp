#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/rng.hpp"
#include "deskasr/resnet/resnet_am.hpp"

using namespace deskasr;
using namespace deskasr::resnet;
using deskasr::gradcore::BnMode;
using deskasr::gradcore::Rng;
using deskasr::gradcore::Tensor;

namespace {

// Small architecture without time strides: context 11.
ResNetSpec arch_plain() {
  ResNetSpec s;
  s.in_channels = 2;
  s.mel_bins = 16;
  s.stage0_maps = 4;
  s.stage0_kf = 3;
  s.stage0_kt = 3;
  s.stage0_pool_f = 2;
  s.stage0_pool_t = 1;
  s.stages = {{4, 1, BlockKind::kBasic, 1, 1, 1, 1},
              {8, 1, BlockKind::kBasic, 2, 1, 1, 1}};
  s.fc_dims = {16};
  s.fc_time_kernel = 1;
  s.n_states = 5;
  s.seed = 7;
  return s;
}

// Time stride 2 in the second stage: context 17, one frame of floor slack.
ResNetSpec arch_strided() {
  ResNetSpec s = arch_plain();
  s.stages[1].stride_t = 2;
  s.fc_time_kernel = 3;
  s.seed = 9;
  return s;
}

// Column (d) analog at width/8: stride-2 conv plus (2x2) pool in stage 4.
ResNetSpec arch_d_desk() {
  return table_column_spec('d', 64).scaled(8);
}

std::vector<double> random_maps(const ResNetSpec& s, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(s.in_channels * s.mel_bins * T);
  for (auto& v : x) v = rng.normal();
  return x;
}

std::vector<double> window_of(const std::vector<double>& maps, const ResNetSpec& s,
                              std::size_t T, std::size_t t0, std::size_t len) {
  std::vector<double> w(s.in_channels * s.mel_bins * len);
  const std::size_t planes = s.in_channels * s.mel_bins;
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(maps.begin() + p * T + t0, len, w.begin() + p * len);
  }
  return w;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("required context matches a layer-by-layer trace") {
  ResNetAm plain(arch_plain());
  // conv0 k3 (+2), four 3x3 block convs (+8), fc kernel 1 -> 11.
  CHECK(plain.required_context() == 11);
  CHECK(plain.max_input_window() == 11);

  ResNetAm strided(arch_strided());
  // Reversed walk: fc3 -> 3; conv(+2) -> 5; stride-2 conv -> 11; +2 -> 13;
  // +2 -> 15; conv0 -> 17.
  CHECK(strided.required_context() == 17);
  CHECK(strided.max_input_window() == 18);
}

TEST_CASE("table column contexts reproduce the 55 and 76 frame inputs") {
  // Width-scaled copies share the full-scale time geometry.
  ResNetAm b(table_column_spec('b', 100).scaled(8));
  CHECK(b.required_context() == 55);
  CHECK(b.max_input_window() == 55);

  ResNetAm d(arch_d_desk());
  CHECK(d.required_context() == 73);
  CHECK(d.max_input_window() == 76);

  ResNetAm a(table_column_spec('a', 100).scaled(8));
  CHECK(a.max_input_window() == 31);
  ResNetAm c(table_column_spec('c', 100).scaled(8));
  CHECK(c.max_input_window() == 56);
}

TEST_CASE("full-scale column (d) parameter count within 1% of 67.1M") {
  ResNetAm d(table_column_spec('d'));
  const double count = static_cast<double>(d.param_count());
  CHECK(std::abs(count - 67.1e6) / 67.1e6 < 0.01);
}

TEST_CASE("desk column (d) builds and runs on a 3x64x76 input") {
  ResNetAm d(arch_d_desk());
  d.warm_up_statistics();
  auto logits = d.forward_window(random_maps(d.spec(), 76, 3), 76);
  CHECK(logits.size() == d.spec().n_states);
  CHECK_THROWS_AS(d.forward_window(random_maps(d.spec(), 72, 3), 72), ContextError);
  CHECK_THROWS_AS(d.forward_window(random_maps(d.spec(), 77, 3), 77), ContextError);
}

TEST_CASE("frequency bins progress 64-32-16-8-4 across stages") {
  ResNetAm d(arch_d_desk());
  d.warm_up_statistics();
  // Trace by running blocks individually: block inputs carry the F extents.
  Rng rng(5);
  std::vector<double> x(1 * 3 * 64 * 76);
  for (auto& v : x) v = rng.normal();
  // After conv0 + pool0 the map is stage0_maps x 32 x T.
  // Blocks 0-2: F=32, 3-5: 16, 6-8: 8, 9-11: 4 (enforced by BN dims).
  const auto& spec = d.spec();
  CHECK(spec.mel_bins == 64);
  Tensor probe = Tensor::from({1, spec.stage0_maps, 32, 40},
                              std::vector<double>(spec.stage0_maps * 32 * 40, 0.1));
  Tensor out0 = d.eval_block(0, probe, BnMode::kEval);
  CHECK(out0.dim(2) == 32);
  Tensor probe3 = Tensor::from({1, spec.stages[0].maps, 32, 40},
                               std::vector<double>(spec.stages[0].maps * 32 * 40, 0.1));
  Tensor out3 = d.eval_block(3, probe3, BnMode::kEval);
  CHECK(out3.dim(2) == 16);  // stage-2 entry block strides frequency
}

TEST_CASE("zero-weight model yields the uniform distribution") {
  ResNetAm m(arch_plain());
  m.warm_up_statistics();
  auto params = m.params();
  for (auto& [name, t] : params.items) {
    if (name.starts_with("fc1.")) {  // final state layer
      std::fill(t.raw().begin(), t.raw().end(), 0.0);
    }
  }
  auto logits = m.forward_window(random_maps(m.spec(), 11, 17), 11);
  for (double v : logits) CHECK(v == 0.0);
}

TEST_CASE("zero-initialized last conv turns a block into a crop") {
  ResNetAm m(arch_plain());
  m.warm_up_statistics();
  auto params = m.params();
  auto* w = params.find("block0.conv1.W");
  REQUIRE(w != nullptr);
  std::fill(w->raw().begin(), w->raw().end(), 0.0);

  Rng rng(11);
  const std::size_t C = m.spec().stages[0].maps, F = 8, T = 15;
  std::vector<double> x(C * F * T);
  for (auto& v : x) v = rng.normal();
  Tensor in = Tensor::from({1, C, F, T}, x);
  Tensor out = m.eval_block(0, in, BnMode::kEval);
  CHECK(out.dim(3) == T - 4);
  // Block output equals the input cropped by 2 frames on each edge.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < T - 4; ++t) {
        CHECK(out.value()[(c * F + f) * (T - 4) + t] ==
              doctest::Approx(x[(c * F + f) * T + t + 2]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("crop-shortcut shape law holds for every table column") {
  for (char col : {'a', 'b', 'c', 'd'}) {
    ResNetSpec spec = table_column_spec(col, 50).scaled(16);
    ResNetAm m(spec);
    m.warm_up_statistics();  // any forward would throw CropError on a violation
    auto logits = m.forward_window(
        random_maps(spec, m.max_input_window(), 21), m.max_input_window());
    CHECK(logits.size() == 50);
  }
}

TEST_CASE("to_dilated applies the stride-to-dilation recipe") {
  ResNetAm strided(arch_strided());
  ResNetAm dense = strided.to_dilated();
  // Single time-stride-2 conv: every later unit carries dilation 2.
  bool after = false;
  for (const auto& u : dense.time_units()) {
    CHECK(u.stride_t == 1);
    if (!after && u.dil_t == 1) continue;
    after = true;
    CHECK(u.dil_t == 2);
  }
  CHECK(after);

  // Column (d) analog: stride points at the stage-4 conv and the (2x2)
  // pool; the FC stack ends up dilated by 4.
  ResNetAm d(arch_d_desk());
  ResNetAm dd = d.to_dilated();
  CHECK(dd.time_units().back().dil_t == 4);

  // Parameter values untouched by the geometry transform.
  auto pa = d.params(), pb = dd.params();
  REQUIRE(pa.items.size() == pb.items.size());
  for (std::size_t i = 0; i < pa.items.size(); ++i) {
    CHECK(pa.items[i].second.value().data() == pb.items[i].second.value().data());
  }
}

TEST_CASE("stride inversion recovers the windowed geometry") {
  for (const ResNetSpec& spec : {arch_plain(), arch_strided(), arch_d_desk()}) {
    ResNetAm m(spec);
    ResNetAm round = m.to_dilated().to_windowed();
    auto a = m.time_units();
    auto b = round.time_units();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].stride_t == b[i].stride_t);
      CHECK(a[i].dil_t == b[i].dil_t);
      CHECK(a[i].kernel_t == b[i].kernel_t);
    }
  }
}

TEST_CASE("dense prediction equals sliding-window evaluation") {
  for (const ResNetSpec& spec : {arch_plain(), arch_strided(), arch_d_desk()}) {
    ResNetAm win(spec);
    win.warm_up_statistics();
    ResNetAm dense = win.to_dilated();
    const std::size_t ctx = win.required_context();
    const std::size_t T = ctx + 7;
    auto maps = random_maps(spec, T, 31);
    auto rows = dense.forward_dense(maps, T);
    const std::size_t S = spec.n_states;
    REQUIRE(rows.size() == 8 * S);
    double worst = 0.0;
    for (std::size_t t = 0; t < 8; ++t) {
      auto w = window_of(maps, spec, T, t, ctx);
      auto one = win.forward_window(w, ctx);
      for (std::size_t s = 0; s < S; ++s) {
        worst = std::max(worst, std::abs(one[s] - rows[t * S + s]));
      }
    }
    CHECK_MESSAGE(worst < 1e-9, "arch with ctx " << ctx << " diff " << worst);
  }
}

TEST_CASE("dense output at context length is a single matching row") {
  ResNetAm win(arch_strided());
  win.warm_up_statistics();
  ResNetAm dense = win.to_dilated();
  const std::size_t ctx = win.required_context();
  auto maps = random_maps(win.spec(), ctx, 41);
  auto rows = dense.forward_dense(maps, ctx);
  auto one = win.forward_window(maps, ctx);
  REQUIRE(rows.size() == one.size());
  CHECK(max_abs_diff(rows, one) < 1e-9);
  CHECK_THROWS_AS(dense.forward_dense(random_maps(win.spec(), ctx - 1, 2), ctx - 1),
                  ContextError);
  CHECK_THROWS_AS(win.forward_dense(maps, ctx), ConfigError);
}

TEST_CASE("edge rows are independent of what follows (no time padding)") {
  ResNetAm win(arch_plain());
  win.warm_up_statistics();
  ResNetAm dense = win.to_dilated();
  const std::size_t ctx = dense.required_context();
  const std::size_t T = ctx + 5;
  auto maps = random_maps(win.spec(), T, 53);
  // Extend by 6 extra frames; overlapping rows must be bit-comparable.
  const std::size_t T2 = T + 6;
  Rng rng(99);
  std::vector<double> longer(win.spec().in_channels * win.spec().mel_bins * T2);
  const std::size_t planes = win.spec().in_channels * win.spec().mel_bins;
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(maps.begin() + p * T, T, longer.begin() + p * T2);
    for (std::size_t t = T; t < T2; ++t) longer[p * T2 + t] = rng.normal();
  }
  auto rows_short = dense.forward_dense(maps, T);
  auto rows_long = dense.forward_dense(longer, T2);
  const std::size_t S = win.spec().n_states;
  const std::size_t overlap = T - ctx + 1;
  double worst = 0.0;
  for (std::size_t t = 0; t < overlap; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      worst = std::max(worst,
                       std::abs(rows_short[t * S + s] - rows_long[t * S + s]));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("residual block stack passes the gradient check") {
  ResNetSpec spec = arch_plain();
  spec.mel_bins = 8;
  spec.stage0_maps = 2;
  spec.stages = {{2, 1, BlockKind::kBasic, 1, 1, 1, 1},
                 {4, 1, BlockKind::kBasic, 2, 1, 1, 1}};
  spec.fc_dims = {4};
  spec.n_states = 3;
  ResNetAm model(spec);
  const std::size_t ctx = model.required_context();

  Rng rng(61);
  const std::size_t B = 2;
  std::vector<double> x(B * spec.in_channels * spec.mel_bins * ctx);
  for (auto& v : x) v = rng.normal();
  std::vector<int> labels{1, 2};

  auto params = model.params();
  auto loss_value = [&]() {
    params.zero_grads();
    Tensor in = Tensor::from({B, spec.in_channels, spec.mel_bins, ctx},
                             std::vector<double>(x));
    Tensor logits = model.forward_batch(in, BnMode::kTrain);
    Tensor loss = gradcore::softmax_cross_entropy(logits, labels);
    backward(loss);
    return loss.item();
  };
  loss_value();
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params.items) analytic.push_back(t.grad_copy());

  // Batch-norm composition: 1e-4 tolerance, spot-check a subset of
  // coordinates per parameter to keep the runtime small.
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t idx = 0;
  Rng pick(4);
  for (auto& [name, t] : params.items) {
    auto& v = t.raw();
    const std::size_t n_checks = std::min<std::size_t>(v.size(), 6);
    for (std::size_t c = 0; c < n_checks; ++c) {
      const std::size_t j = pick.below(v.size());
      const double orig = v[j];
      v[j] = orig + h;
      const double fp = loss_value();
      v[j] = orig - h;
      const double fm = loss_value();
      v[j] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[idx][j];
      worst = std::max(worst, std::abs(a - numeric) /
                                  std::max(std::abs(a) + std::abs(numeric), 1e-5));
    }
    ++idx;
  }
  CHECK_MESSAGE(worst < 1e-4, "max rel err " << worst);
}

TEST_CASE("training on the synthetic corpus reduces the loss") {
  corpus::SynthConfig cc;
  cc.seed = 23;
  cc.n_speakers = 2;
  cc.n_states = 6;
  cc.n_words = 3;
  cc.states_per_word = 2;
  cc.n_utts = 14;
  cc.min_T = 30;
  cc.max_T = 40;
  cc.feature_dim = 16;
  cc.speaker_dim = 2;
  corpus::Corpus corpus = corpus::synth_corpus(cc);

  ResNetSpec spec = arch_plain();
  spec.in_channels = 3;
  spec.n_states = cc.n_states;
  ResNetAm model(spec);
  ResNetTrainSchedule sched;
  sched.steps = 120;
  sched.batch_size = 4;
  sched.learning_rate = 0.02;
  sched.momentum = 0.9;
  sched.seed = 5;
  sched.delta_order = 2;
  auto result = train_resnet(model, corpus, sched);
  REQUIRE(result.losses.size() >= 2);
  CHECK(result.losses.back() < result.losses.front());

  const double acc = resnet_frame_accuracy(model, corpus,
                                           corpus.utterances.size() * 9 / 10,
                                           corpus.utterances.size(), 2);
  CHECK(acc > 0.5);
}

TEST_CASE("resnet model save/load round trip preserves outputs") {
  namespace fs = std::filesystem;
  ResNetAm model(arch_strided());
  model.warm_up_statistics();
  auto maps = random_maps(model.spec(), model.required_context(), 3);
  auto before = model.forward_window(maps, model.required_context());
  const std::string dir = "test_resnet_model";
  save_resnet_model(model, dir);
  ResNetAm loaded = load_resnet_model(dir);
  auto after = loaded.forward_window(maps, model.required_context());
  CHECK(max_abs_diff(before, after) == 0.0);
  fs::remove_all(dir);
}
