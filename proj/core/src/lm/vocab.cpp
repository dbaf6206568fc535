#include "deskasr/lm/vocab.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"

namespace deskasr::lm {

Vocab::Vocab() {
  add(kBos);
  add(kEos);
  add(kUnk);
}

void Vocab::add(const std::string& w) {
  if (index_.count(w)) return;
  index_[w] = static_cast<int>(words_.size());
  words_.push_back(w);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sentences) {
  Vocab v;
  for (const auto& s : sentences) {
    for (const auto& w : s) v.add(w);
  }
  return v;
}

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  Vocab v;
  if (words.size() < 3 || words[0] != kBos || words[1] != kEos || words[2] != kUnk) {
    throw DataError("Vocab::from_words: list must start with the three specials");
  }
  for (std::size_t i = 3; i < words.size(); ++i) v.add(words[i]);
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? unk() : it->second;
}

bool Vocab::has(const std::string& word) const { return index_.count(word) > 0; }

double LmScorer::log_prob(const std::vector<int>& history, int word) const {
  auto dist = next_distribution(history);
  const double p = dist[static_cast<std::size_t>(word)];
  return p > 0.0 ? std::log(p) : -1e30;
}

double perplexity(const LmScorer& scorer,
                  const std::vector<std::vector<std::string>>& text) {
  const Vocab& v = scorer.vocab();
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& sent : text) {
    std::vector<int> history{v.bos()};
    for (const auto& w : sent) {
      const int id = v.id(w);
      total += scorer.log_prob(history, id);
      history.push_back(id);
      ++n;
    }
    total += scorer.log_prob(history, v.eos());
    ++n;
  }
  if (n == 0) return 1.0;
  return std::exp(-total / static_cast<double>(n));
}

std::vector<std::vector<std::string>> read_sentences(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open text corpus: " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> sent;
    std::string w;
    while (ls >> w) sent.push_back(w);
    if (!sent.empty()) out.push_back(std::move(sent));
  }
  return out;
}

void write_sentences(const std::vector<std::vector<std::string>>& sentences,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write text corpus: " + path);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << " ";
      os << s[i];
    }
    os << "\n";
  }
}

}  // namespace deskasr::lm
