#include "deskasr/fusion/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deskasr/errors.hpp"

namespace deskasr::fusion {

DecodeBigram DecodeBigram::uniform(std::size_t n_words) {
  DecodeBigram g;
  g.n_words = n_words;
  const double lp = -std::log(static_cast<double>(n_words));
  g.start.assign(n_words, lp);
  g.trans.assign(n_words, std::vector<double>(n_words, lp));
  g.end.assign(n_words, 0.0);
  return g;
}

namespace {

struct Token {
  double total = -std::numeric_limits<double>::infinity();
  double acoustic = 0.0;
  double lm = 0.0;
  std::vector<int> words;
};

bool better(const Token& a, const Token& b) {
  if (a.total != b.total) return a.total > b.total;
  return a.words < b.words;
}

// Keep the best k tokens with distinct word histories.
void insert_token(std::vector<Token>& slot, Token tok, std::size_t k) {
  for (auto& t : slot) {
    if (t.words == tok.words) {
      if (better(tok, t)) t = std::move(tok);
      return;
    }
  }
  slot.push_back(std::move(tok));
  std::sort(slot.begin(), slot.end(), better);
  if (slot.size() > k) slot.resize(k);
}

}  // namespace

std::vector<DecodedHyp> viterbi_decode(const FrameScores& scores,
                                       const corpus::Lexicon& lexicon,
                                       const DecodeBigram& lm,
                                       const DecoderConfig& cfg) {
  if (lexicon.word_states.empty()) {
    throw ConfigError("viterbi_decode: empty lexicon");
  }
  const std::size_t W = lexicon.word_states.size();
  const std::size_t K = std::max<std::size_t>(1, cfg.nbest);
  if (lm.n_words != W) {
    throw ConfigError("viterbi_decode: bigram covers " + std::to_string(lm.n_words) +
                      " words, lexicon has " + std::to_string(W));
  }

  // Node layout: one slot per (word, position).
  std::vector<std::size_t> node_of(W);
  std::size_t n_nodes = 0;
  for (std::size_t w = 0; w < W; ++w) {
    node_of[w] = n_nodes;
    n_nodes += lexicon.word_states[w].size();
  }

  auto emit = [&](std::size_t t, std::size_t w, std::size_t j) {
    return scores.at(t, static_cast<std::size_t>(lexicon.word_states[w][j]));
  };

  std::vector<std::vector<Token>> cur(n_nodes), next(n_nodes);
  for (std::size_t w = 0; w < W; ++w) {
    Token tok;
    tok.words = {static_cast<int>(w)};
    tok.lm = lm.start[w];
    tok.acoustic = emit(0, w, 0);
    tok.total = tok.acoustic + cfg.lm_scale * tok.lm - cfg.insertion_penalty;
    insert_token(cur[node_of[w]], std::move(tok), K);
  }

  for (std::size_t t = 1; t < scores.T; ++t) {
    for (auto& slot : next) slot.clear();
    for (std::size_t w = 0; w < W; ++w) {
      const std::size_t len = lexicon.word_states[w].size();
      for (std::size_t j = 0; j < len; ++j) {
        const auto& slot = cur[node_of[w] + j];
        if (slot.empty()) continue;
        for (const auto& tok : slot) {
          // Stay in the same state.
          {
            Token nt = tok;
            const double e = emit(t, w, j);
            nt.acoustic += e;
            nt.total += e;
            insert_token(next[node_of[w] + j], std::move(nt), K);
          }
          // Advance within the word.
          if (j + 1 < len) {
            Token nt = tok;
            const double e = emit(t, w, j + 1);
            nt.acoustic += e;
            nt.total += e;
            insert_token(next[node_of[w] + j + 1], std::move(nt), K);
          }
          // Cross a word boundary.
          if (j + 1 == len) {
            for (std::size_t v = 0; v < W; ++v) {
              Token nt = tok;
              const double e = emit(t, v, 0);
              nt.words.push_back(static_cast<int>(v));
              nt.lm += lm.trans[w][v];
              nt.acoustic += e;
              nt.total += e + cfg.lm_scale * lm.trans[w][v] - cfg.insertion_penalty;
              insert_token(next[node_of[v]], std::move(nt), K);
            }
          }
        }
      }
    }
    std::swap(cur, next);
  }

  std::vector<Token> finals;
  for (std::size_t w = 0; w < W; ++w) {
    const std::size_t last = node_of[w] + lexicon.word_states[w].size() - 1;
    for (const auto& tok : cur[last]) {
      Token ft = tok;
      ft.lm += lm.end[w];
      ft.total += cfg.lm_scale * lm.end[w];
      finals.push_back(std::move(ft));
    }
  }
  if (finals.empty()) {
    throw DataError("viterbi_decode: no complete hypothesis (utterance too short?)");
  }
  std::sort(finals.begin(), finals.end(), better);
  std::vector<DecodedHyp> out;
  for (const auto& tok : finals) {
    bool dup = false;
    for (const auto& h : out) dup = dup || h.words == tok.words;
    if (dup) continue;
    out.push_back({tok.words, tok.acoustic, tok.lm, tok.total});
    if (out.size() == K) break;
  }
  return out;
}

}  // namespace deskasr::fusion
