#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace deskasr::lm {

struct BrownResult {
  // Class id per clustered word, in word-list order.
  std::vector<std::string> words;
  std::vector<int> class_of;
  double ami = 0.0;

  int word_class(const std::string& w) const;
};

// Average mutual information of the class bigram distribution induced by a
// word clustering over within-sentence adjacent pairs.
double clustering_ami(const std::vector<std::vector<int>>& word_bigrams,
                      const std::vector<int>& class_of, std::size_t n_classes);

// Greedy bottom-up merging: start from singleton classes, repeatedly merge
// the pair whose merge keeps the AMI highest, until n_classes remain.
// Tie-break: lowest word-id pair. Words are the corpus words in first-
// occurrence order; sentence boundary tokens are not part of the objective.
BrownResult brown_cluster(const std::vector<std::vector<std::string>>& sentences,
                          std::size_t n_classes);

// Class map over an LmScorer vocabulary: clustered words keep their Brown
// class; specials (and any word unseen by the clustering) get fresh
// singleton classes appended after the Brown classes.
std::unordered_map<int, int> class_map_for_vocab(
    const BrownResult& clusters, const std::vector<std::string>& vocab_words,
    std::size_t* n_classes_out);

}  // namespace deskasr::lm
