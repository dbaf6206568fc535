#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "deskasr/errors.hpp"
#include "deskasr/fusion/decoder.hpp"
#include "deskasr/fusion/frame_scores.hpp"
#include "deskasr/fusion/fuse.hpp"
#include "deskasr/gradcore/rng.hpp"

using namespace deskasr;
using namespace deskasr::fusion;
using deskasr::gradcore::Rng;

namespace {

FrameScores from_probs(const std::string& id, std::size_t T, std::size_t S,
                       const std::vector<double>& probs) {
  FrameScores s;
  s.model_id = id;
  s.T = T;
  s.n_states = S;
  s.log_posteriors.resize(T * S);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    s.log_posteriors[i] = std::log(probs[i]);
  }
  return s;
}

FrameScores random_scores(const std::string& id, std::size_t T, std::size_t S,
                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> logits(T * S);
  for (auto& v : logits) v = rng.normal();
  return scores_from_logits(id, T, S, std::move(logits));
}

}  // namespace

TEST_CASE("fuse: identity, geometric-mean value, idempotence") {
  FrameScores a = from_probs("a", 1, 2, {0.8, 0.2});
  FrameScores b = from_probs("b", 1, 2, {0.6, 0.4});

  auto same = fuse({a}, {.weights = {1.0}});
  CHECK(std::exp(same.at(0, 0)) == doctest::Approx(0.8).epsilon(1e-12));

  // Equal-weight log-linear pool: sqrt(p*q) renormalized.
  auto ab = fuse({a, b}, {.weights = {0.5, 0.5}});
  CHECK(std::exp(ab.at(0, 0)) == doctest::Approx(0.7101).epsilon(1e-4));
  CHECK(std::exp(ab.at(0, 1)) == doctest::Approx(0.2899).epsilon(1e-4));

  auto aa = fuse({a, a}, {.weights = {0.5, 0.5}});
  CHECK(aa.at(0, 0) == doctest::Approx(a.at(0, 0)).epsilon(1e-12));
  CHECK(aa.at(0, 1) == doctest::Approx(a.at(0, 1)).epsilon(1e-12));
}

TEST_CASE("fuse output rows are log-distributions and order-invariant") {
  auto m1 = random_scores("m1", 6, 4, 1);
  auto m2 = random_scores("m2", 6, 4, 2);
  auto m3 = random_scores("m3", 6, 4, 3);
  for (Pooling pooling : {Pooling::kLogLinear, Pooling::kLinear}) {
    auto f = fuse({m1, m2, m3}, {.weights = {0.5, 0.3, 0.2}, .pooling = pooling});
    f.validate();
    auto g = fuse({m3, m1, m2}, {.weights = {0.2, 0.5, 0.3}, .pooling = pooling});
    for (std::size_t i = 0; i < f.log_posteriors.size(); ++i) {
      CHECK(f.log_posteriors[i] == doctest::Approx(g.log_posteriors[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fuse rejects mismatched shapes and bad weights") {
  auto m1 = random_scores("m1", 4, 3, 1);
  auto m2 = random_scores("m2", 5, 3, 2);
  CHECK_THROWS_AS(fuse({m1, m2}, {.weights = {0.5, 0.5}}), FusionError);
  CHECK_THROWS_AS(fuse({m1}, {.weights = {-1.0}}), FusionError);
  CHECK_THROWS_AS(fuse({m1}, {.weights = {0.3, 0.7}}), FusionError);
}

TEST_CASE("frame scores file round trip") {
  namespace fs = std::filesystem;
  auto m = random_scores("lstm1", 7, 5, 9);
  const std::string path = "test_scores.fsc";
  save_frame_scores(m, path);
  auto r = load_frame_scores(path);
  CHECK(r.model_id == "lstm1");
  CHECK(r.T == 7);
  CHECK(r.n_states == 5);
  CHECK(r.log_posteriors == m.log_posteriors);
  r.validate();
  fs::remove(path);
}

// ---------------------------------------------------------------------------
// Decoder.

namespace {

corpus::Lexicon two_word_lexicon() {
  corpus::Lexicon lex;
  lex.n_states = 4;
  lex.word_names = {"wa", "wb"};
  lex.word_states = {{0, 1}, {2, 3}};
  return lex;
}

// Exhaustive oracle: every word sequence and every monotone segmentation.
struct OracleBest {
  double total = -std::numeric_limits<double>::infinity();
  std::vector<int> words;
};

double best_alignment(const FrameScores& s, const std::vector<int>& states) {
  const std::size_t T = s.T, L = states.size();
  if (L > T) return -std::numeric_limits<double>::infinity();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(T, std::vector<double>(L, kNegInf));
  dp[0][0] = s.at(0, static_cast<std::size_t>(states[0]));
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      double best = dp[t - 1][j];
      if (j > 0) best = std::max(best, dp[t - 1][j - 1]);
      if (best == kNegInf) continue;
      dp[t][j] = best + s.at(t, static_cast<std::size_t>(states[j]));
    }
  }
  return dp[T - 1][L - 1];
}

void enumerate_sequences(const FrameScores& s, const corpus::Lexicon& lex,
                         const DecodeBigram& lm, const DecoderConfig& cfg,
                         std::vector<int>& seq, std::size_t min_frames,
                         OracleBest& best) {
  if (!seq.empty()) {
    std::vector<int> states;
    for (int w : seq) {
      const auto& ws = lex.word_states[static_cast<std::size_t>(w)];
      states.insert(states.end(), ws.begin(), ws.end());
    }
    const double acoustic = best_alignment(s, states);
    if (acoustic > -std::numeric_limits<double>::infinity()) {
      double lmp = lm.start[static_cast<std::size_t>(seq[0])];
      for (std::size_t i = 1; i < seq.size(); ++i) {
        lmp += lm.trans[static_cast<std::size_t>(seq[i - 1])]
                       [static_cast<std::size_t>(seq[i])];
      }
      lmp += lm.end[static_cast<std::size_t>(seq.back())];
      const double total = acoustic + cfg.lm_scale * lmp -
                           cfg.insertion_penalty * static_cast<double>(seq.size());
      if (total > best.total || (total == best.total && seq < best.words)) {
        best.total = total;
        best.words = seq;
      }
    }
  }
  if (min_frames >= s.T) return;
  for (std::size_t w = 0; w < lex.word_states.size(); ++w) {
    seq.push_back(static_cast<int>(w));
    enumerate_sequences(s, lex, lm, cfg, seq, min_frames + lex.word_states[w].size(),
                        best);
    seq.pop_back();
  }
}

}  // namespace

TEST_CASE("decoder recovers a one-hot word trace") {
  corpus::Lexicon lex = two_word_lexicon();
  // Frames spell out word wa's states 0,0,1.
  std::vector<double> probs{0.97, 0.01, 0.01, 0.01,  //
                            0.97, 0.01, 0.01, 0.01,  //
                            0.01, 0.97, 0.01, 0.01};
  auto scores = from_probs("t", 3, 4, probs);
  auto hyps = viterbi_decode(scores, lex, DecodeBigram::uniform(2), {});
  REQUIRE(!hyps.empty());
  CHECK(hyps[0].words == std::vector<int>{0});
}

TEST_CASE("decoder equals exhaustive enumeration on small instances") {
  corpus::Lexicon lex = two_word_lexicon();
  Rng rng(3);
  DecodeBigram lm = DecodeBigram::uniform(2);
  lm.start = {std::log(0.7), std::log(0.3)};
  lm.trans = {{std::log(0.4), std::log(0.6)}, {std::log(0.8), std::log(0.2)}};
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t T = 2 + rng.below(5);  // up to 6 frames
    auto scores = random_scores("r", T, 4, 1000 + trial);
    DecoderConfig cfg{.lm_scale = 1.0, .insertion_penalty = 0.2 * rng.uniform()};
    auto hyps = viterbi_decode(scores, lex, lm, cfg);
    OracleBest oracle;
    std::vector<int> seq;
    enumerate_sequences(scores, lex, lm, cfg, seq, 0, oracle);
    REQUIRE(!hyps.empty());
    CHECK(hyps[0].total == doctest::Approx(oracle.total).epsilon(1e-9));
    CHECK(hyps[0].words == oracle.words);
  }
}

TEST_CASE("three-word lexicon oracle agreement") {
  corpus::Lexicon lex;
  lex.n_states = 4;
  lex.word_names = {"x", "y", "z"};
  lex.word_states = {{0}, {1, 2}, {3}};
  DecodeBigram lm = DecodeBigram::uniform(3);
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 1 + rng.below(6);
    auto scores = random_scores("r", T, 4, 2000 + trial);
    DecoderConfig cfg;
    auto hyps = viterbi_decode(scores, lex, lm, cfg);
    OracleBest oracle;
    std::vector<int> seq;
    enumerate_sequences(scores, lex, lm, cfg, seq, 0, oracle);
    CHECK(hyps[0].total == doctest::Approx(oracle.total).epsilon(1e-9));
    CHECK(hyps[0].words == oracle.words);
  }
}

TEST_CASE("raising the insertion penalty never increases the word count") {
  corpus::Lexicon lex = two_word_lexicon();
  auto scores = random_scores("r", 12, 4, 77);
  DecodeBigram lm = DecodeBigram::uniform(2);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double penalty : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    auto hyps = viterbi_decode(scores, lex, lm,
                               {.lm_scale = 1.0, .insertion_penalty = penalty});
    CHECK(hyps[0].words.size() <= prev);
    prev = hyps[0].words.size();
  }
}

TEST_CASE("decoder produces distinct n-best entries in order") {
  corpus::Lexicon lex = two_word_lexicon();
  auto scores = random_scores("r", 8, 4, 11);
  auto hyps = viterbi_decode(scores, lex, DecodeBigram::uniform(2),
                             {.lm_scale = 1.0, .nbest = 5});
  REQUIRE(hyps.size() >= 2);
  for (std::size_t i = 1; i < hyps.size(); ++i) {
    CHECK(hyps[i - 1].total >= hyps[i].total);
    CHECK(hyps[i - 1].words != hyps[i].words);
  }
}

TEST_CASE("decoder rejects an empty lexicon") {
  corpus::Lexicon lex;
  auto scores = random_scores("r", 3, 2, 1);
  CHECK_THROWS_AS(viterbi_decode(scores, lex, DecodeBigram::uniform(0), {}),
                  ConfigError);
}
