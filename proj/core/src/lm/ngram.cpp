#include "deskasr/lm/ngram.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"

namespace deskasr::lm {

NgramLm NgramLm::train(const std::vector<std::vector<std::string>>& sentences,
                       const NgramConfig& cfg) {
  return train_with_vocab(sentences, cfg, Vocab::build(sentences));
}

NgramLm NgramLm::train_with_vocab(
    const std::vector<std::vector<std::string>>& sentences, const NgramConfig& cfg,
    const Vocab& vocab) {
  if (cfg.order < 1) throw ConfigError("ngram: order must be >= 1");
  if (cfg.discount < 0.0 || cfg.discount >= 1.0) {
    throw ConfigError("ngram: discount must lie in [0, 1)");
  }
  if (sentences.empty()) throw DataError("ngram: empty training corpus");

  NgramLm lm;
  lm.cfg_ = cfg;
  lm.vocab_ = vocab;
  lm.contexts_.resize(cfg.order);

  for (const auto& sent : sentences) {
    std::vector<int> ids{lm.vocab_.bos()};
    for (const auto& w : sent) ids.push_back(lm.vocab_.id(w));
    if (cfg.count_sentence_end) ids.push_back(lm.vocab_.eos());
    for (std::size_t pos = 1; pos < ids.size(); ++pos) {
      const int w = ids[pos];
      for (std::size_t n = 0; n < cfg.order; ++n) {
        if (pos < n) break;
        std::vector<int> ctx(ids.begin() + static_cast<std::ptrdiff_t>(pos - n),
                             ids.begin() + static_cast<std::ptrdiff_t>(pos));
        auto& c = lm.contexts_[n][ctx];
        c.total += 1;
        c.counts[w] += 1;
      }
    }
  }
  return lm;
}

double NgramLm::prob(const std::vector<int>& history, int word,
                     std::size_t level) const {
  if (level == 0) {
    // Uniform over everything but <s>.
    return 1.0 / static_cast<double>(vocab_.size() - 1);
  }
  const std::size_t n = level - 1;  // context length
  std::vector<int> ctx;
  if (n > 0) {
    if (history.size() < n) return prob(history, word, level - 1);
    ctx.assign(history.end() - static_cast<std::ptrdiff_t>(n), history.end());
  }
  const auto it = contexts_[n].find(ctx);
  if (it == contexts_[n].end() || it->second.total == 0) {
    return prob(history, word, level - 1);
  }
  const auto& c = it->second;
  const double total = static_cast<double>(c.total);
  const auto wit = c.counts.find(word);
  const double count = wit == c.counts.end() ? 0.0 : static_cast<double>(wit->second);
  const double discounted = std::max(count - cfg_.discount, 0.0) / total;
  const double backoff_mass =
      cfg_.discount * static_cast<double>(c.counts.size()) / total;
  return discounted + backoff_mass * prob(history, word, level - 1);
}

std::vector<double> NgramLm::next_distribution(const std::vector<int>& history) const {
  std::vector<double> dist(vocab_.size(), 0.0);
  for (std::size_t w = 0; w < vocab_.size(); ++w) {
    if (static_cast<int>(w) == vocab_.bos()) continue;
    dist[w] = prob(history, static_cast<int>(w), cfg_.order);
  }
  return dist;
}

double NgramLm::log_prob(const std::vector<int>& history, int word) const {
  const double p = prob(history, word, cfg_.order);
  return p > 0.0 ? std::log(p) : -1e30;
}

void NgramLm::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write ngram model: " + path);
  os << "deskasr-ngram-v1\n";
  os << "order " << cfg_.order << "\n";
  os << "discount " << cfg_.discount << "\n";
  os << "count_sentence_end " << (cfg_.count_sentence_end ? 1 : 0) << "\n";
  os << "vocab " << vocab_.size() << "\n";
  for (const auto& w : vocab_.words()) os << w << "\n";
  for (std::size_t n = 0; n < contexts_.size(); ++n) {
    for (const auto& [ctx, c] : contexts_[n]) {
      for (const auto& [w, count] : c.counts) {
        os << "g " << n;
        for (int x : ctx) os << " " << x;
        os << " " << w << " " << count << "\n";
      }
    }
  }
}

NgramLm NgramLm::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open ngram model: " + path);
  std::string magic;
  std::getline(is, magic);
  if (magic != "deskasr-ngram-v1") throw DataError("bad ngram header in " + path);
  NgramLm lm;
  std::string key;
  std::size_t vocab_n = 0;
  int cse = 1;
  is >> key >> lm.cfg_.order;
  is >> key >> lm.cfg_.discount;
  is >> key >> cse;
  lm.cfg_.count_sentence_end = cse != 0;
  is >> key >> vocab_n;
  std::vector<std::string> words(vocab_n);
  for (auto& w : words) is >> w;
  lm.vocab_ = Vocab::from_words(words);
  lm.contexts_.resize(lm.cfg_.order);
  while (is >> key) {
    if (key != "g") break;
    std::size_t n = 0;
    is >> n;
    std::vector<int> ctx(n);
    for (auto& x : ctx) is >> x;
    int w = 0;
    std::size_t count = 0;
    is >> w >> count;
    auto& c = lm.contexts_[n][ctx];
    c.total += count;
    c.counts[w] = count;
  }
  return lm;
}

}  // namespace deskasr::lm
