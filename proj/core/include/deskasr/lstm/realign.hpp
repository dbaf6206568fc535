#pragma once

#include <vector>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/lstm/lstm_am.hpp"

namespace deskasr::lstm {

struct AlignPath {
  std::vector<int> labels;  // per frame, the aligned state id
  double log_prob = 0.0;
};

// Monotone forced alignment of a fixed state sequence to T frames,
// maximizing sum_t logp[t][seq[j(t)]] with minimum duration 1 per state.
// Among equal-score paths the one whose transitions happen earliest wins
// (lexicographically smallest transition-time vector). logp rows are frames,
// columns model states. Throws AlignmentError when T < seq length.
AlignPath forced_align(const std::vector<double>& logp, std::size_t T,
                       std::size_t n_states, const std::vector<int>& state_seq);

// Realignment of one utterance: the model's per-frame log posteriors drive a
// forced alignment of the utterance's word sequence expanded through the
// lexicon.
std::vector<int> realign(const LstmAm& model, const corpus::Utterance& utt,
                         const corpus::Lexicon& lexicon);

}  // namespace deskasr::lstm
