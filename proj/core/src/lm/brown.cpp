#include "deskasr/lm/brown.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "deskasr/errors.hpp"

namespace deskasr::lm {

int BrownResult::word_class(const std::string& w) const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == w) return class_of[i];
  }
  return -1;
}

double clustering_ami(const std::vector<std::vector<int>>& word_bigrams,
                      const std::vector<int>& class_of, std::size_t n_classes) {
  std::vector<double> joint(n_classes * n_classes, 0.0);
  std::vector<double> left(n_classes, 0.0), right(n_classes, 0.0);
  double total = 0.0;
  for (const auto& bg : word_bigrams) {
    const int c1 = class_of[static_cast<std::size_t>(bg[0])];
    const int c2 = class_of[static_cast<std::size_t>(bg[1])];
    joint[static_cast<std::size_t>(c1) * n_classes + static_cast<std::size_t>(c2)] +=
        static_cast<double>(bg[2]);
    total += static_cast<double>(bg[2]);
  }
  if (total == 0.0) return 0.0;
  for (std::size_t c1 = 0; c1 < n_classes; ++c1) {
    for (std::size_t c2 = 0; c2 < n_classes; ++c2) {
      left[c1] += joint[c1 * n_classes + c2];
      right[c2] += joint[c1 * n_classes + c2];
    }
  }
  double ami = 0.0;
  for (std::size_t c1 = 0; c1 < n_classes; ++c1) {
    for (std::size_t c2 = 0; c2 < n_classes; ++c2) {
      const double p = joint[c1 * n_classes + c2] / total;
      if (p <= 0.0) continue;
      const double pl = left[c1] / total, pr = right[c2] / total;
      ami += p * std::log(p / (pl * pr));
    }
  }
  return ami;
}

BrownResult brown_cluster(const std::vector<std::vector<std::string>>& sentences,
                          std::size_t n_classes) {
  if (n_classes < 1) throw ConfigError("brown_cluster: n_classes must be >= 1");

  // Word inventory in first-occurrence order.
  std::vector<std::string> words;
  std::unordered_map<std::string, int> id_of;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      if (!id_of.count(w)) {
        id_of[w] = static_cast<int>(words.size());
        words.push_back(w);
      }
    }
  }
  const std::size_t V = words.size();
  if (n_classes > V) {
    throw ConfigError("brown_cluster: n_classes (" + std::to_string(n_classes) +
                      ") exceeds vocabulary (" + std::to_string(V) + ")");
  }

  // Within-sentence adjacent word pairs with counts.
  std::map<std::pair<int, int>, int> pair_counts;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      pair_counts[{id_of[s[i]], id_of[s[i + 1]]}] += 1;
    }
  }
  std::vector<std::vector<int>> bigrams;
  for (const auto& [pr, c] : pair_counts) {
    bigrams.push_back({pr.first, pr.second, c});
  }

  BrownResult result;
  result.words = words;
  result.class_of.resize(V);
  for (std::size_t i = 0; i < V; ++i) result.class_of[i] = static_cast<int>(i);
  std::size_t live = V;

  // Class labels stay word-id based during merging: a class's id is the
  // lowest word id it contains, which makes the tie-break canonical.
  while (live > n_classes) {
    double best_ami = -1e300;
    int best_a = -1, best_b = -1;
    std::vector<int> live_classes;
    {
      std::vector<char> seen(V, 0);
      for (std::size_t i = 0; i < V; ++i) {
        const int c = result.class_of[i];
        if (!seen[static_cast<std::size_t>(c)]) {
          seen[static_cast<std::size_t>(c)] = 1;
          live_classes.push_back(c);
        }
      }
      std::sort(live_classes.begin(), live_classes.end());
    }
    for (std::size_t ai = 0; ai < live_classes.size(); ++ai) {
      for (std::size_t bi = ai + 1; bi < live_classes.size(); ++bi) {
        const int a = live_classes[ai], b = live_classes[bi];
        std::vector<int> trial = result.class_of;
        for (auto& c : trial) {
          if (c == b) c = a;
        }
        // Compact to dense ids for the AMI evaluation.
        std::vector<int> dense(V, -1);
        int next = 0;
        std::vector<int> trial_dense(V);
        for (std::size_t i = 0; i < V; ++i) {
          const int c = trial[i];
          if (dense[static_cast<std::size_t>(c)] < 0) {
            dense[static_cast<std::size_t>(c)] = next++;
          }
          trial_dense[i] = dense[static_cast<std::size_t>(c)];
        }
        const double ami =
            clustering_ami(bigrams, trial_dense, static_cast<std::size_t>(next));
        if (ami > best_ami + 1e-12) {
          best_ami = ami;
          best_a = a;
          best_b = b;
        }
      }
    }
    for (auto& c : result.class_of) {
      if (c == best_b) c = best_a;
    }
    --live;
  }

  // Compact class ids to 0..n_classes-1 in order of lowest member word id.
  std::vector<int> dense(V, -1);
  int next = 0;
  for (std::size_t i = 0; i < V; ++i) {
    const int c = result.class_of[i];
    if (dense[static_cast<std::size_t>(c)] < 0) dense[static_cast<std::size_t>(c)] = next++;
  }
  for (auto& c : result.class_of) c = dense[static_cast<std::size_t>(c)];
  std::vector<int> final_classes = result.class_of;
  result.ami = clustering_ami(bigrams, final_classes, n_classes);
  return result;
}

std::unordered_map<int, int> class_map_for_vocab(
    const BrownResult& clusters, const std::vector<std::string>& vocab_words,
    std::size_t* n_classes_out) {
  int max_class = -1;
  for (int c : clusters.class_of) max_class = std::max(max_class, c);
  std::unordered_map<int, int> map;
  int next = max_class + 1;
  for (std::size_t i = 0; i < vocab_words.size(); ++i) {
    const int c = clusters.word_class(vocab_words[i]);
    map[static_cast<int>(i)] = c >= 0 ? c : next++;
  }
  if (n_classes_out) *n_classes_out = static_cast<std::size_t>(next);
  return map;
}

}  // namespace deskasr::lm
