#pragma once

#include <string>
#include <vector>

#include "deskasr/lm/vocab.hpp"

namespace deskasr::lm {

struct NBestEntry {
  std::vector<std::string> words;
  double acoustic = 0.0;
  double lm = 0.0;
  double total = 0.0;
};

// Candidate word sequences for one utterance, sorted by total descending
// after rescoring.
struct NBestList {
  std::string utt_id;
  std::vector<NBestEntry> entries;
};

// File format (version 1):
//   # deskasr-nbest-v1
//   UTT <id>
//   <rank> <acoustic_logp> <lm_logp> <words...>
// with a blank line after each utterance block.
void save_nbest(const std::vector<NBestList>& lists, const std::string& path);
std::vector<NBestList> load_nbest(const std::string& path);

// total = acoustic_weight * acoustic + lm_weight * (log-prob under the
// weighted linear mixture of scorers) - insertion_penalty * word count.
// Entries re-sorted by total descending (stable); the lm field is replaced
// by the mixture score.
NBestList rescore_nbest(const NBestList& nbest,
                        const std::vector<const LmScorer*>& scorers,
                        const std::vector<double>& weights, double acoustic_weight,
                        double insertion_penalty, double lm_weight = 1.0);

}  // namespace deskasr::lm
