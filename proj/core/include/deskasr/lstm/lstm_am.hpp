#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/corpus/features.hpp"
#include "deskasr/gradcore/checkpoint.hpp"
#include "deskasr/gradcore/nn.hpp"
#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::lstm {

struct LstmAmConfig {
  std::size_t n_layers = 1;
  std::size_t cells_per_layer = 32;  // split across the two directions, even
  std::size_t bottleneck_dim = 16;
  std::size_t n_states = 20;
  corpus::FeatureSpec features;
  std::size_t speaker_dim = 0;         // 0: no speaker head
  std::size_t speaker_head_hidden = 16;
  std::uint64_t seed = 1;
};

// A minibatch of fixed-length windows. Rows of the per-frame quantities are
// t-major: row (t*B + b) belongs to window b at frame t.
struct WindowBatch {
  std::size_t B = 0, T = 0, F = 0;
  std::vector<double> frames;   // window-major: (b*T + t)*F
  std::vector<int> labels;      // T*B, t-major
  std::vector<double> mask;     // T*B, t-major
  std::vector<double> speaker;  // B x D_s (empty when unused)
};

struct SaMtlLosses {
  double ce = 0.0;
  double mse = 0.0;
};

// Bidirectional LSTM stack -> linear bottleneck -> linear output, with an
// optional speaker head (sigmoid layer then tanh layer) fed by the last
// trunk layer's per-frame output.
class LstmAm {
 public:
  explicit LstmAm(LstmAmConfig cfg);

  const LstmAmConfig& config() const { return cfg_; }
  std::size_t fused_dim() const { return cfg_.features.fused_dim(); }

  // Per-frame logits for one window (inference). window is T x fused_dim.
  std::vector<double> forward(const std::vector<double>& window, std::size_t T) const;
  // Per-frame last-trunk-layer activations, T x cells_per_layer.
  std::vector<double> trunk_activations(const std::vector<double>& window,
                                        std::size_t T) const;

  // The three-equation update: theta_c and theta_s take their own loss
  // gradients, the trunk takes grad(CE) - lambda * grad(MSE). Exactly one
  // backward pass per loss.
  SaMtlLosses sa_mtl_step(const WindowBatch& batch, double lr, double lambda);
  // Same update realized as a single combined graph with a gradient-reversal
  // stage in front of the speaker head.
  SaMtlLosses sa_mtl_step_reversal(const WindowBatch& batch, double lr, double lambda);
  // Plain cross-entropy SGD on trunk + main head (speaker head untouched).
  double sgd_ce_step(const WindowBatch& batch, double lr);

  // Inference model without the speaker head; main-path outputs unchanged.
  LstmAm discard_speaker_head() const;

  gradcore::ParamMap params() const;          // all parameters
  gradcore::ParamMap trunk_params() const;    // theta
  gradcore::ParamMap main_params() const;     // theta_c
  gradcore::ParamMap speaker_params() const;  // theta_s

  struct DirPair {
    gradcore::LstmLayer fw, bw;
  };
  std::vector<DirPair>& layers() { return layers_; }
  gradcore::Linear& bottleneck() { return bottleneck_; }

 private:
  struct TrunkOut {
    std::vector<gradcore::Tensor> frames;  // per t, B x cells
  };
  TrunkOut run_trunk(const WindowBatch& batch) const;
  gradcore::Tensor main_logits(const TrunkOut& trunk) const;   // (T*B) x n_states
  gradcore::Tensor speaker_out(const TrunkOut& trunk, double grl_lambda) const;
  gradcore::Tensor speaker_targets(const WindowBatch& batch) const;

  LstmAmConfig cfg_;
  std::vector<DirPair> layers_;
  gradcore::Linear bottleneck_;
  gradcore::Linear output_;
  gradcore::Linear spk1_, spk2_;
};

struct TrainSchedule {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  std::size_t subseq_len = 21;
  double learning_rate = 0.05;
  double lambda = 0.0;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_ce;
  std::vector<double> epoch_mse;
};

// Trains on the first 80% of the corpus (the save_corpus train split),
// deterministic per (config, schedule) seeds. Throws TrainingError naming
// the epoch if the loss goes non-finite.
TrainResult train(LstmAm& model, const corpus::Corpus& corpus,
                  const TrainSchedule& schedule);

// Frame accuracy over [from, to) utterances, computed on 21-frame windows
// stitched back together (padding frames ignored).
double frame_accuracy(const LstmAm& model, const corpus::Corpus& corpus,
                      std::size_t from, std::size_t to,
                      std::size_t subseq_len = 21);

// Builds a window batch from whole utterances (windows + masks + speakers).
std::vector<WindowBatch> batch_windows(const LstmAm& model,
                                       const corpus::Corpus& corpus,
                                       std::size_t from, std::size_t to,
                                       std::size_t subseq_len,
                                       std::size_t batch_size);

// Model directory: meta.json (kind, config) + params.ckpt.
void save_lstm_model(const LstmAm& model, const std::string& dir);
LstmAm load_lstm_model(const std::string& dir);

}  // namespace deskasr::lstm
