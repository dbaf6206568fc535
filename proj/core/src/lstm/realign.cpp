#include "deskasr/lstm/realign.hpp"

#include <algorithm>
#include <limits>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"

namespace deskasr::lstm {

AlignPath forced_align(const std::vector<double>& logp, std::size_t T,
                       std::size_t n_states, const std::vector<int>& state_seq) {
  const std::size_t L = state_seq.size();
  if (L == 0) throw AlignmentError("forced_align: empty state sequence");
  if (T < L) {
    throw AlignmentError("forced_align: " + std::to_string(T) + " frames cannot fit " +
                         std::to_string(L) + " states at minimum duration 1");
  }
  for (int s : state_seq) {
    if (s < 0 || static_cast<std::size_t>(s) >= n_states) {
      throw LabelError("forced_align: state " + std::to_string(s) + " out of range");
    }
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // score[t][j]: best partial path ending at frame t in sequence position j.
  // trans[t][j]: transition times of that path (frame where each position
  // j' <= j started, excluding position 0). Lexicographically smaller
  // transition vectors are preferred among score ties.
  std::vector<std::vector<double>> score(T, std::vector<double>(L, kNegInf));
  std::vector<std::vector<std::vector<int>>> trans(
      T, std::vector<std::vector<int>>(L));

  auto emit = [&](std::size_t t, std::size_t j) {
    return logp[t * n_states + static_cast<std::size_t>(state_seq[j])];
  };

  score[0][0] = emit(0, 0);
  for (std::size_t t = 1; t < T; ++t) {
    const std::size_t j_lo = L + t >= T ? L - (T - t) : 0;
    for (std::size_t j = std::min(t, L - 1) + 1; j-- > j_lo;) {
      const double e = emit(t, j);
      const double stay = score[t - 1][j];
      const double advance = j > 0 ? score[t - 1][j - 1] : kNegInf;
      if (stay == kNegInf && advance == kNegInf) continue;
      bool take_advance;
      if (advance > stay) {
        take_advance = true;
      } else if (stay > advance) {
        take_advance = false;
      } else {
        // Tie: the lexicographically smaller transition-time vector wins.
        std::vector<int> a = trans[t - 1][j - 1];
        a.push_back(static_cast<int>(t));
        take_advance = a < trans[t - 1][j];
      }
      if (take_advance) {
        score[t][j] = advance + e;
        trans[t][j] = trans[t - 1][j - 1];
        trans[t][j].push_back(static_cast<int>(t));
      } else {
        score[t][j] = stay + e;
        trans[t][j] = trans[t - 1][j];
      }
    }
  }

  AlignPath path;
  path.log_prob = score[T - 1][L - 1];
  if (path.log_prob == kNegInf) {
    throw AlignmentError("forced_align: no feasible monotone path");
  }
  path.labels.resize(T);
  const auto& tv = trans[T - 1][L - 1];
  std::size_t j = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (j < tv.size() && static_cast<int>(t) == tv[j]) ++j;
    path.labels[t] = state_seq[j];
  }
  return path;
}

std::vector<int> realign(const LstmAm& model, const corpus::Utterance& utt,
                         const corpus::Lexicon& lexicon) {
  std::vector<int> state_seq;
  for (int w : utt.words) {
    const auto& states = lexicon.states_of(w);
    state_seq.insert(state_seq.end(), states.begin(), states.end());
  }
  auto fused = corpus::fuse_features(utt, model.config().features);
  const std::size_t C = model.config().n_states;
  std::vector<double> logits = model.forward(fused, utt.T);
  gradcore::log_softmax_rows_inplace(logits, utt.T, C);
  return forced_align(logits, utt.T, C, state_seq).labels;
}

}  // namespace deskasr::lstm
