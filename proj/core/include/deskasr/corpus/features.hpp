#pragma once

#include <string>
#include <vector>

#include "deskasr/corpus/corpus.hpp"

namespace deskasr::corpus {

// One feature stream of the fused input. "frames" is the utterance frame
// matrix, "speaker" broadcasts the speaker vector across time.
struct StreamSpec {
  std::string name;  // "frames" | "speaker"
  std::size_t dim = 0;
  int delta_order = 0;  // 0, 1, or 2; only meaningful for frame streams
};

struct FeatureSpec {
  std::vector<StreamSpec> streams;
  std::size_t delta_window = 2;  // regression half-window

  std::size_t fused_dim() const;
};

// Regression deltas with edge replication. Returns T x (order*F): the first
// F columns are the first-order deltas, the next F (order 2) the deltas of
// the deltas.
std::vector<double> compute_deltas(const std::vector<double>& frames, std::size_t T,
                                   std::size_t F, int order, std::size_t window);

// Concatenates streams in spec order; frame streams contribute
// [x, delta, delta-delta] up to their delta_order, the speaker stream repeats
// the utterance speaker vector on every row. Result is T x fused_dim.
std::vector<double> fuse_features(const Utterance& utt, const FeatureSpec& spec);

struct Subsequence {
  std::size_t start = 0;            // offset of the window in the utterance
  std::size_t real_frames = 0;      // frames before padding
  std::vector<double> frames;       // len x F
  std::vector<int> labels;          // len
  std::vector<double> mask;         // len; 1 real, 0 padding
};

// Non-overlapping windows of `len` frames covering the utterance. The final
// window repeats the last frame with mask 0 on the padding.
std::vector<Subsequence> make_subsequences(const std::vector<double>& frames,
                                           const std::vector<int>& labels,
                                           std::size_t T, std::size_t F,
                                           std::size_t len);

// Channel-stacked view for the convolutional models: C x F x T with
// C = 1 + delta_order (static, delta, delta-delta).
std::vector<double> utt_to_channels(const Utterance& utt, int delta_order,
                                    std::size_t delta_window);

}  // namespace deskasr::corpus
