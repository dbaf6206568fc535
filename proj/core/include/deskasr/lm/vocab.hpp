#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace deskasr::lm {

// Word/id mapping with the three specials. Ids are dense from 0 in first-
// occurrence order; <s> is never predicted (it only conditions).
class Vocab {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  Vocab();
  static Vocab build(const std::vector<std::vector<std::string>>& sentences);
  static Vocab from_words(const std::vector<std::string>& words);  // full list incl specials

  int id(const std::string& word) const;  // maps unknown words to <unk>
  bool has(const std::string& word) const;
  const std::string& word(int id) const { return words_[static_cast<std::size_t>(id)]; }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }

  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  void add(const std::string& w);
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Scoring interface shared by every language model here. Histories are id
// sequences starting with <s>.
class LmScorer {
 public:
  virtual ~LmScorer() = default;
  virtual const Vocab& vocab() const = 0;
  virtual std::string name() const = 0;
  // Conditional distribution over the vocabulary (bos entry is 0).
  virtual std::vector<double> next_distribution(const std::vector<int>& history) const = 0;
  virtual double log_prob(const std::vector<int>& history, int word) const;
};

// exp(mean negative log-probability): sentence-end predicted, sentence-begin
// conditioned on only. Unknown words map to <unk>.
double perplexity(const LmScorer& scorer,
                  const std::vector<std::vector<std::string>>& text);

std::vector<std::vector<std::string>> read_sentences(const std::string& path);
void write_sentences(const std::vector<std::vector<std::string>>& sentences,
                     const std::string& path);

}  // namespace deskasr::lm
