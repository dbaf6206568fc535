#pragma once

#include <vector>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/fusion/frame_scores.hpp"

namespace deskasr::fusion {

// Bigram word grammar in log space.
struct DecodeBigram {
  std::size_t n_words = 0;
  std::vector<double> start;               // log p(w | <s>)
  std::vector<std::vector<double>> trans;  // trans[v][w] = log p(w | v)
  std::vector<double> end;                 // log p(</s> | w)

  static DecodeBigram uniform(std::size_t n_words);
};

struct DecoderConfig {
  double lm_scale = 1.0;
  double insertion_penalty = 0.0;  // subtracted from the total per word
  std::size_t nbest = 1;
};

struct DecodedHyp {
  std::vector<int> words;
  double acoustic = 0.0;  // sum of frame log-posteriors on the best path
  double lm = 0.0;        // sum of bigram log-probabilities incl. </s>
  double total = 0.0;     // acoustic + lm_scale*lm - penalty*len
};

// Token-passing Viterbi over (word, state-position) nodes with self-loops,
// minimum duration one frame per state. Returns up to cfg.nbest distinct
// word sequences sorted by total descending; exact ties break toward the
// lexicographically smaller word sequence.
std::vector<DecodedHyp> viterbi_decode(const FrameScores& scores,
                                       const corpus::Lexicon& lexicon,
                                       const DecodeBigram& lm,
                                       const DecoderConfig& cfg);

}  // namespace deskasr::fusion
