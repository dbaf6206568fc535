#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/corpus/features.hpp"
#include "deskasr/corpus/sampler.hpp"
#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/rng.hpp"
#include "deskasr/gradcore/tensor.hpp"

using namespace deskasr;
using namespace deskasr::corpus;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_speakers = 2;
  cfg.n_states = 10;
  cfg.n_words = 5;
  cfg.states_per_word = 2;
  cfg.n_utts = 20;
  cfg.min_T = 30;
  cfg.max_T = 50;
  cfg.feature_dim = 6;
  cfg.speaker_dim = 3;
  return cfg;
}

}  // namespace

TEST_CASE("synth corpus is deterministic per seed") {
  Corpus a = synth_corpus(small_config(7));
  Corpus b = synth_corpus(small_config(7));
  Corpus c = synth_corpus(small_config(8));
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("synth corpus covers all states and validates config") {
  Corpus corpus = synth_corpus(small_config(3));
  auto hist = corpus.label_histogram();
  for (std::size_t s = 0; s < hist.size(); ++s) {
    CHECK_MESSAGE(hist[s] > 0, "state " << s << " never emitted");
  }
  for (const auto& u : corpus.utterances) {
    CHECK(u.labels.size() == u.T);
    CHECK(u.T >= 1);
    CHECK(u.speaker_vector.size() == corpus.config.speaker_dim);
  }
  SynthConfig bad = small_config(1);
  bad.n_states = 3;  // fewer states than words
  CHECK_THROWS_AS(synth_corpus(bad), ConfigError);
  SynthConfig zero = small_config(1);
  zero.n_utts = 0;
  CHECK_THROWS_AS(synth_corpus(zero), ConfigError);
}

TEST_CASE("large speaker shift makes frames speaker-separable by linear probe") {
  SynthConfig cfg = small_config(11);
  cfg.speaker_shift = 3.0;
  cfg.n_utts = 40;
  Corpus corpus = synth_corpus(cfg);

  // Softmax-regression probe from raw frames to speaker id.
  using namespace deskasr::gradcore;
  const std::size_t F = cfg.feature_dim;
  Tensor W = Tensor::zeros({F, cfg.n_speakers}, true);
  Tensor b = Tensor::zeros({cfg.n_speakers}, true);
  std::vector<double> X;
  std::vector<int> y;
  for (const auto& u : corpus.utterances) {
    const int spk = u.speaker_id.back() - '0';
    for (std::size_t t = 0; t < u.T; t += 4) {
      X.insert(X.end(), u.frames.begin() + t * F, u.frames.begin() + (t + 1) * F);
      y.push_back(spk);
    }
  }
  Tensor Xt = Tensor::from({y.size(), F}, X);
  for (int it = 0; it < 150; ++it) {
    W.zero_grad();
    b.zero_grad();
    Tensor loss = softmax_cross_entropy(add_rows(matmul(Xt, W), b), y);
    backward(loss);
    auto gw = W.grad();
    for (std::size_t i = 0; i < W.size(); ++i) W.raw()[i] -= 0.5 * gw[i];
    auto gb = b.grad();
    for (std::size_t i = 0; i < b.size(); ++i) b.raw()[i] -= 0.5 * gb[i];
  }
  Tensor logits = add_rows(matmul(Xt, W), b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto row = logits.value().subspan(i * cfg.n_speakers, cfg.n_speakers);
    const std::size_t arg =
        std::max_element(row.begin(), row.end()) - row.begin();
    if (static_cast<int>(arg) == y[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(y.size());
  CHECK(acc > 0.95);
}

TEST_CASE("deltas: constant, ramp and reversal") {
  const std::size_t T = 12, F = 2;
  std::vector<double> constant(T * F, 3.0);
  auto d = compute_deltas(constant, T, F, 1, 2);
  for (double v : d) CHECK(v == 0.0);

  // Linear ramp x_t = t: interior delta exactly 1.
  std::vector<double> ramp(T * F);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t f = 0; f < F; ++f) ramp[t * F + f] = static_cast<double>(t);
  auto d1 = compute_deltas(ramp, T, F, 1, 2);
  for (std::size_t t = 2; t + 2 < T; ++t) {
    CHECK(d1[t * F] == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Delta-delta of the ramp interior is 0.
  auto d2 = compute_deltas(ramp, T, F, 2, 2);
  for (std::size_t t = 4; t + 4 < T; ++t) {
    CHECK(std::abs(d2[t * 2 * F + F]) < 1e-12);
  }
}

TEST_CASE("delta of reversed sequence is negated reversal") {
  gradcore::Rng rng(5);
  const std::size_t T = 9, F = 3;
  std::vector<double> x(T * F);
  for (auto& v : x) v = rng.normal();
  std::vector<double> rev(T * F);
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(x.begin() + (T - 1 - t) * F, F, rev.begin() + t * F);
  auto dx = compute_deltas(x, T, F, 1, 2);
  auto drev = compute_deltas(rev, T, F, 1, 2);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      CHECK(dx[t * F + f] ==
            doctest::Approx(-drev[(T - 1 - t) * F + f]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fuse_features dimensions and broadcast") {
  Utterance u;
  u.T = 5;
  u.F = 4;
  u.frames.assign(u.T * u.F, 0.5);
  u.speaker_vector = {1.0, 2.0, 3.0};

  FeatureSpec identity{.streams = {{"frames", 4, 0}}};
  auto f0 = fuse_features(u, identity);
  CHECK(f0.size() == u.T * 4);
  CHECK(f0 == u.frames);

  FeatureSpec with_speaker{.streams = {{"frames", 4, 0}, {"speaker", 3, 0}}};
  auto f1 = fuse_features(u, with_speaker);
  CHECK(with_speaker.fused_dim() == 7);
  for (std::size_t t = 0; t < u.T; ++t) {
    CHECK(f1[t * 7 + 4] == 1.0);
    CHECK(f1[t * 7 + 6] == 3.0);
  }

  FeatureSpec full{.streams = {{"frames", 4, 2}, {"speaker", 3, 0}}};
  CHECK(full.fused_dim() == 15);  // 4*3 + 3
  CHECK(fuse_features(u, full).size() == u.T * 15);

  FeatureSpec wrong{.streams = {{"frames", 5, 0}}};
  CHECK_THROWS_AS(fuse_features(u, wrong), SpecError);
}

TEST_CASE("make_subsequences partitions and pads") {
  const std::size_t T = 100, F = 2, len = 21;
  std::vector<double> frames(T * F);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<double>(i);
  std::vector<int> labels(T);
  for (std::size_t t = 0; t < T; ++t) labels[t] = static_cast<int>(t % 7);

  auto subs = make_subsequences(frames, labels, T, F, len);
  CHECK(subs.size() == 5);
  CHECK(subs.back().real_frames == 16);
  double pad_mask = 0.0;
  for (double m : subs.back().mask) pad_mask += m;
  CHECK(pad_mask == 16.0);

  // Unmasked frames concatenated reproduce the original matrix exactly.
  std::vector<double> rebuilt;
  for (const auto& s : subs) {
    for (std::size_t i = 0; i < s.real_frames; ++i) {
      rebuilt.insert(rebuilt.end(), s.frames.begin() + i * F,
                     s.frames.begin() + (i + 1) * F);
    }
  }
  CHECK(rebuilt == frames);

  auto exact = make_subsequences(frames, labels, 21, F, len);
  CHECK(exact.size() == 1);
  for (double m : exact[0].mask) CHECK(m == 1.0);
}

TEST_CASE("masked loss equals loss on truncated sequence") {
  using namespace deskasr::gradcore;
  Rng rng(19);
  const std::size_t len = 8, real = 5, C = 3;
  std::vector<double> logits_data(len * C);
  for (auto& v : logits_data) v = rng.normal();
  // Padding repeats the last real row, mask zeroes it out.
  for (std::size_t i = real; i < len; ++i)
    std::copy_n(logits_data.begin() + (real - 1) * C, C, logits_data.begin() + i * C);
  std::vector<int> targets(len, 1);
  std::vector<double> mask(len, 1.0);
  for (std::size_t i = real; i < len; ++i) mask[i] = 0.0;

  Tensor full = Tensor::from({len, C}, logits_data);
  Tensor truncated = Tensor::from(
      {real, C}, std::vector<double>(logits_data.begin(), logits_data.begin() + real * C));
  std::vector<int> trunc_targets(targets.begin(), targets.begin() + real);
  const double masked = softmax_cross_entropy(full, targets, mask).item();
  const double plain = softmax_cross_entropy(truncated, trunc_targets).item();
  CHECK(std::abs(masked - plain) < 1e-12);
}

TEST_CASE("balanced sampler weight ratio and empirical frequency") {
  // counts {a:100, b:1}, gamma=0.8 -> 100^0.8 : 1, about 39.81 : 1.
  BalancedSampler sampler({100, 1}, {.exponent = 0.8}, 99);
  const double expected_ratio = std::pow(100.0, 0.8);
  CHECK(sampler.weights()[0] / sampler.weights()[1] ==
        doctest::Approx(expected_ratio).epsilon(1e-12));

  const std::size_t N = 100000;
  std::size_t count_a = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (sampler.next() == 0) ++count_a;
  }
  const double p_a = expected_ratio / (expected_ratio + 1.0);
  const double emp = static_cast<double>(count_a) / static_cast<double>(N);
  CHECK(std::abs(emp - p_a) / p_a < 0.02);
}

TEST_CASE("balanced sampler degenerate and uniform cases") {
  // gamma = 1 reduces to proportional sampling.
  BalancedSampler prop({3, 1}, {.exponent = 1.0}, 5);
  CHECK(prop.weights()[0] == doctest::Approx(0.75).epsilon(1e-12));

  // Equal counts: uniform for any gamma.
  BalancedSampler uni({7, 7, 7}, {.exponent = 0.37}, 5);
  for (double w : uni.weights()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // Zero-count class excluded with notice.
  BalancedSampler excl({4, 0, 2}, {.exponent = 0.8}, 5);
  REQUIRE(excl.excluded().size() == 1);
  CHECK(excl.excluded()[0] == 1);
  for (int i = 0; i < 50; ++i) CHECK(excl.next() != 1);

  CHECK_THROWS_AS(BalancedSampler({1}, {.exponent = 1.5}, 1), ConfigError);
  CHECK_THROWS_AS(BalancedSampler({0, 0}, {.exponent = 0.8}, 1), ConfigError);
}

TEST_CASE("sampler empirical distribution Kolmogorov distance below 0.01") {
  std::vector<std::size_t> counts{50, 20, 10, 5, 1};
  BalancedSampler sampler(counts, {.exponent = 0.8}, 1234);
  std::vector<double> expect;
  double total = 0.0;
  for (auto c : counts) {
    expect.push_back(std::pow(static_cast<double>(c), 0.8));
    total += expect.back();
  }
  for (auto& e : expect) e /= total;
  const std::size_t N = 100000;
  std::vector<double> emp(counts.size(), 0.0);
  for (std::size_t i = 0; i < N; ++i) emp[static_cast<std::size_t>(sampler.next())] += 1.0;
  double ks = 0.0, ce = 0.0, cm = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    ce += expect[i];
    cm += emp[i] / static_cast<double>(N);
    ks = std::max(ks, std::abs(ce - cm));
  }
  CHECK(ks < 0.01);
}

TEST_CASE("corpus save/load round trip") {
  namespace fs = std::filesystem;
  Corpus corpus = synth_corpus(small_config(21));
  const std::string dir = "test_corpus_dir";
  save_corpus(corpus, dir);
  Corpus loaded = load_corpus(dir);
  CHECK(loaded.content_hash() == corpus.content_hash());
  CHECK(loaded.lexicon.word_names == corpus.lexicon.word_names);
  CHECK(fs::exists(fs::path(dir) / "train.txt"));
  CHECK(fs::exists(fs::path(dir) / "eval.ref.trn"));
  fs::remove_all(dir);
}
