#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "deskasr/gradcore/checkpoint.hpp"
#include "deskasr/gradcore/nn.hpp"
#include "deskasr/gradcore/optimizer.hpp"
#include "deskasr/lm/vocab.hpp"

namespace deskasr::lm {

struct NeuralLmConfig {
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 24;  // also the residual FC width
  double dropout = 0.0;         // vertical only, never across time
  std::size_t epochs = 15;
  double learning_rate = 0.01;  // Adam
  std::uint64_t seed = 1;
  double mtl_weight = 0.5;  // class-head weight when a class map is given
  // Char-LSTM word encoder.
  std::size_t char_embed_dim = 8;
  std::size_t char_hidden_dim = 12;
  // Word-DCC stack: one causal conv layer per dilation entry.
  std::vector<std::size_t> dilations = {1, 2, 4};
  std::size_t conv_kernel = 2;
};

struct MtlSpec {
  std::unordered_map<int, int> class_of;  // vocab word id -> class id
  std::size_t n_classes = 0;
};

// Word-LSTM language model: embeddings, two LSTM layers, one FC layer and a
// softmax layer; the upper LSTM and the FC layer carry residual connections.
// The MTL variant adds a class softmax trained jointly with weight
// mtl_weight. The char variant replaces the embedding table with the final
// state of a character LSTM run over the word's spelling.
class RnnLm : public LmScorer {
 public:
  enum class Kind { kWord, kChar };

  RnnLm(Kind kind, const Vocab& vocab, const NeuralLmConfig& cfg,
        std::optional<MtlSpec> mtl);

  const Vocab& vocab() const override { return vocab_; }
  std::string name() const override;
  std::vector<double> next_distribution(const std::vector<int>& history) const override;

  // Mean word cross-entropy (+ weighted class term) of one epoch.
  double train_epoch(const std::vector<std::vector<int>>& id_sentences);
  gradcore::ParamMap params() const;
  Kind kind() const { return kind_; }
  bool has_mtl() const { return mtl_.has_value(); }
  const NeuralLmConfig& config() const { return cfg_; }

  void save(const std::string& dir) const;
  static std::unique_ptr<RnnLm> load(const std::string& dir);

 private:
  gradcore::Tensor word_embedding(int word) const;          // 1 x embed_dim
  gradcore::Tensor embed_sequence(const std::vector<int>& ids) const;  // N x embed
  struct Forward {
    gradcore::Tensor word_logits;   // N x V
    gradcore::Tensor class_logits;  // N x n_classes (undefined without MTL)
  };
  Forward forward_ids(const std::vector<int>& inputs, bool train);

  Kind kind_;
  Vocab vocab_;
  NeuralLmConfig cfg_;
  std::optional<MtlSpec> mtl_;
  gradcore::Tensor embed_;  // V x embed (word variant)
  std::vector<std::string> char_inventory_;
  std::unordered_map<char, int> char_id_;
  gradcore::Tensor char_embed_;  // n_chars x char_embed
  gradcore::LstmLayer char_lstm_;
  gradcore::Linear char_proj_;  // char_hidden -> embed_dim
  gradcore::LstmLayer lstm1_, lstm2_;
  gradcore::Linear fc_;
  gradcore::Linear out_;
  gradcore::Linear class_out_;
  std::unique_ptr<gradcore::Dropout> drop_;
  std::unique_ptr<gradcore::Optimizer> opt_;
};

// Dilated causal convolution language model: embeddings, a stack of causal
// convolutions with residual connections, an FC layer and a softmax layer.
// p(w_t | history) depends only on words before t.
class DccLm : public LmScorer {
 public:
  DccLm(const Vocab& vocab, const NeuralLmConfig& cfg);

  const Vocab& vocab() const override { return vocab_; }
  std::string name() const override { return "word_dcc"; }
  std::vector<double> next_distribution(const std::vector<int>& history) const override;

  double train_epoch(const std::vector<std::vector<int>>& id_sentences);
  gradcore::ParamMap params() const;
  const NeuralLmConfig& config() const { return cfg_; }
  // 1 + sum(dilation * (kernel - 1)) over the stack.
  std::size_t receptive_field() const;

  void save(const std::string& dir) const;
  static std::unique_ptr<DccLm> load(const std::string& dir);

 private:
  gradcore::Tensor forward_ids(const std::vector<int>& inputs);  // N x V logits

  Vocab vocab_;
  NeuralLmConfig cfg_;
  gradcore::Tensor embed_;  // V x hidden (embedding feeds the stack directly)
  struct CausalConv {
    gradcore::Tensor W_prev, W_cur;  // hidden x hidden taps
    gradcore::Tensor b;
    std::size_t dilation = 1;
  };
  std::vector<CausalConv> convs_;
  gradcore::Linear fc_;
  gradcore::Linear out_;
  std::unique_ptr<gradcore::Optimizer> opt_;
};

// Shared training driver: maps sentences to ids, runs epochs, returns the
// per-epoch losses. Throws TrainingError (with the epoch) on divergence.
template <typename Model>
std::vector<double> train_lm(Model& model,
                             const std::vector<std::vector<std::string>>& sentences) {
  std::vector<std::vector<int>> ids;
  ids.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<int> row;
    row.reserve(s.size());
    for (const auto& w : s) row.push_back(model.vocab().id(w));
    ids.push_back(std::move(row));
  }
  std::vector<double> losses;
  for (std::size_t e = 0; e < model.config().epochs; ++e) {
    losses.push_back(model.train_epoch(ids));
  }
  return losses;
}

}  // namespace deskasr::lm
