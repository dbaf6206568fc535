#pragma once

#include <string>
#include <vector>

namespace deskasr::fusion {

// Per-frame log-posterior matrix for one utterance and one model. Every row
// is a log-distribution: logsumexp(row) = 0 within 1e-9.
struct FrameScores {
  std::string model_id;
  std::size_t T = 0;
  std::size_t n_states = 0;
  std::vector<double> log_posteriors;  // T x n_states

  double at(std::size_t t, std::size_t s) const {
    return log_posteriors[t * n_states + s];
  }
  // Throws FusionError when a row is not normalized.
  void validate() const;
};

// Builds FrameScores from raw logits (rows are normalized in place).
FrameScores scores_from_logits(std::string model_id, std::size_t T,
                               std::size_t n_states, std::vector<double> logits);

// File format (version 1): one text header line
//   FRAMESCORES v1 T=<T> states=<S> model=<id>
// followed by T*S little-endian fp64 values, row-major.
void save_frame_scores(const FrameScores& scores, const std::string& path);
FrameScores load_frame_scores(const std::string& path);

}  // namespace deskasr::fusion
