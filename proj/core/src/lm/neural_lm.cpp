#include "deskasr/lm/neural_lm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/optimizer.hpp"
#include "deskasr/gradcore/rng.hpp"

namespace deskasr::lm {

namespace fs = std::filesystem;
using namespace deskasr::gradcore;
using nlohmann::json;

namespace {

// Keeps <s> out of every predicted distribution.
Tensor mask_bos(const Tensor& logits, int bos) {
  std::vector<double> mask(logits.size(), 0.0);
  const std::size_t V = logits.dim(1);
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    mask[r * V + static_cast<std::size_t>(bos)] = -1e30;
  }
  return add(logits, Tensor::from(logits.shape(), std::move(mask)));
}

std::vector<double> softmax_last_row(const Tensor& logits) {
  const std::size_t V = logits.dim(1);
  const std::size_t last = logits.dim(0) - 1;
  std::vector<double> row(logits.value().begin() + last * V,
                          logits.value().begin() + (last + 1) * V);
  log_softmax_rows_inplace(row, 1, V);
  for (auto& v : row) v = std::exp(v);
  return row;
}

}  // namespace

RnnLm::RnnLm(Kind kind, const Vocab& vocab, const NeuralLmConfig& cfg,
             std::optional<MtlSpec> mtl)
    : kind_(kind), vocab_(vocab), cfg_(cfg), mtl_(std::move(mtl)) {
  if (mtl_) {
    for (std::size_t w = 0; w < vocab_.size(); ++w) {
      if (static_cast<int>(w) == vocab_.bos()) continue;
      if (!mtl_->class_of.count(static_cast<int>(w))) {
        throw ConfigError("mtl: class map missing vocab word '" + vocab_.word(
                              static_cast<int>(w)) + "'");
      }
    }
  }
  const std::size_t E = cfg_.embed_dim, H = cfg_.hidden_dim;
  if (kind_ == Kind::kWord) {
    Rng rng(derive_seed(cfg_.seed, "lm.embed"));
    embed_ = init_uniform({vocab_.size(), E}, 0.1, rng);
  } else {
    for (const auto& w : vocab_.words()) {
      if (w.empty()) throw DataError("char lm: empty word string in vocabulary");
      for (char c : w) {
        if (!char_id_.count(c)) {
          char_id_[c] = static_cast<int>(char_inventory_.size());
          char_inventory_.push_back(std::string(1, c));
        }
      }
    }
    Rng rng(derive_seed(cfg_.seed, "lm.char_embed"));
    char_embed_ = init_uniform({char_inventory_.size(), cfg_.char_embed_dim}, 0.1, rng);
    char_lstm_ = LstmLayer(cfg_.char_embed_dim, cfg_.char_hidden_dim,
                           derive_seed(cfg_.seed, "lm.char_lstm"));
    char_proj_ = Linear(cfg_.char_hidden_dim, E, derive_seed(cfg_.seed, "lm.char_proj"));
  }
  lstm1_ = LstmLayer(E, H, derive_seed(cfg_.seed, "lm.lstm1"));
  lstm2_ = LstmLayer(H, H, derive_seed(cfg_.seed, "lm.lstm2"));
  fc_ = Linear(H, H, derive_seed(cfg_.seed, "lm.fc"));
  out_ = Linear(H, vocab_.size(), derive_seed(cfg_.seed, "lm.out"));
  if (mtl_) {
    class_out_ = Linear(H, mtl_->n_classes, derive_seed(cfg_.seed, "lm.class_out"));
  }
  drop_ = std::make_unique<Dropout>(cfg_.dropout, derive_seed(cfg_.seed, "lm.dropout"));
}

std::string RnnLm::name() const {
  std::string base = kind_ == Kind::kWord ? "word_lstm" : "char_lstm";
  if (mtl_) base += "_mtl";
  return base;
}

Tensor RnnLm::word_embedding(int word) const {
  const std::string& s = vocab_.word(word);
  std::vector<int> cids;
  cids.reserve(s.size());
  for (char c : s) cids.push_back(char_id_.at(c));
  Tensor rows = embed(char_embed_, cids);
  LstmLayer::State st = char_lstm_.initial_state(1);
  for (std::size_t i = 0; i < cids.size(); ++i) {
    st = char_lstm_.step(slice_rows(rows, i, i + 1), st);
  }
  return char_proj_.forward(st.h);
}

Tensor RnnLm::embed_sequence(const std::vector<int>& ids) const {
  if (kind_ == Kind::kWord) return embed(embed_, ids);
  std::vector<Tensor> rows;
  rows.reserve(ids.size());
  for (int id : ids) rows.push_back(word_embedding(id));
  return concat_rows(rows);
}

RnnLm::Forward RnnLm::forward_ids(const std::vector<int>& inputs, bool train) {
  const std::size_t N = inputs.size();
  Tensor emb = drop_->apply(embed_sequence(inputs), train);
  std::vector<Tensor> steps;
  steps.reserve(N);
  for (std::size_t t = 0; t < N; ++t) steps.push_back(slice_rows(emb, t, t + 1));

  std::vector<Tensor> h1 = lstm1_.run(steps);
  std::vector<Tensor> h1_in;
  h1_in.reserve(N);
  for (auto& h : h1) h1_in.push_back(drop_->apply(h, train));

  // Upper LSTM and FC wrapped by residual connections.
  std::vector<Tensor> h2 = lstm2_.run(h1_in);
  std::vector<Tensor> rows;
  rows.reserve(N);
  for (std::size_t t = 0; t < N; ++t) {
    Tensor r2 = add(h2[t], h1[t]);
    Tensor r2d = drop_->apply(r2, train);
    Tensor f = add(relu(fc_.forward(r2d)), r2);
    rows.push_back(f);
  }
  Tensor stack = concat_rows(rows);
  Forward fwd;
  fwd.word_logits = mask_bos(out_.forward(stack), vocab_.bos());
  if (mtl_ && cfg_.mtl_weight > 0.0) {
    fwd.class_logits = class_out_.forward(stack);
  }
  return fwd;
}

std::vector<double> RnnLm::next_distribution(const std::vector<int>& history) const {
  auto* self = const_cast<RnnLm*>(this);
  Forward fwd = self->forward_ids(history, false);
  return softmax_last_row(fwd.word_logits);
}

gradcore::ParamMap RnnLm::params() const {
  ParamMap p;
  if (kind_ == Kind::kWord) {
    p.add("embed", embed_);
  } else {
    p.add("char_embed", char_embed_);
    char_lstm_.collect(p, "char_lstm");
    char_proj_.collect(p, "char_proj");
  }
  lstm1_.collect(p, "lstm1");
  lstm2_.collect(p, "lstm2");
  fc_.collect(p, "fc");
  out_.collect(p, "out");
  if (mtl_) class_out_.collect(p, "class_out");
  return p;
}

double RnnLm::train_epoch(const std::vector<std::vector<int>>& id_sentences) {
  const bool use_class = mtl_ && cfg_.mtl_weight > 0.0;
  if (!opt_) {
    opt_ = std::make_unique<Optimizer>(OptimizerConfig{
        .kind = OptKind::kAdam, .learning_rate = cfg_.learning_rate});
  }
  ParamMap all = params();
  std::vector<Tensor> train_list;
  for (auto& [name, t] : all.items) {
    if (!use_class && name.rfind("class_out", 0) == 0) continue;
    train_list.push_back(t);
  }

  double total = 0.0;
  std::size_t count = 0;
  for (const auto& sent : id_sentences) {
    std::vector<int> inputs{vocab_.bos()};
    inputs.insert(inputs.end(), sent.begin(), sent.end());
    std::vector<int> targets(sent.begin(), sent.end());
    targets.push_back(vocab_.eos());

    all.zero_grads();
    Forward fwd = forward_ids(inputs, true);
    Tensor loss = softmax_cross_entropy(fwd.word_logits, targets);
    if (use_class) {
      std::vector<int> class_targets(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) {
        class_targets[i] = mtl_->class_of.at(targets[i]);
      }
      loss = add(loss, scale(softmax_cross_entropy(fwd.class_logits, class_targets),
                             cfg_.mtl_weight));
    }
    backward(loss);
    opt_->step(train_list);
    total += loss.item();
    ++count;
  }
  const double mean = count ? total / static_cast<double>(count) : 0.0;
  if (!std::isfinite(mean)) throw TrainingError("rnn lm: loss diverged");
  return mean;
}

void RnnLm::save(const std::string& dir) const {
  fs::create_directories(dir);
  json meta;
  meta["kind"] = name();
  meta["version"] = 1;
  meta["vocab"] = vocab_.words();
  meta["config"] = {{"embed_dim", cfg_.embed_dim},
                    {"hidden_dim", cfg_.hidden_dim},
                    {"dropout", cfg_.dropout},
                    {"epochs", cfg_.epochs},
                    {"learning_rate", cfg_.learning_rate},
                    {"seed", cfg_.seed},
                    {"mtl_weight", cfg_.mtl_weight},
                    {"char_embed_dim", cfg_.char_embed_dim},
                    {"char_hidden_dim", cfg_.char_hidden_dim}};
  if (mtl_) {
    json classes = json::object();
    for (const auto& [w, c] : mtl_->class_of) classes[std::to_string(w)] = c;
    meta["mtl"] = {{"n_classes", mtl_->n_classes}, {"class_of", classes}};
  }
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(1) << "\n";
  save_checkpoint((fs::path(dir) / "params.ckpt").string(), params());
}

std::unique_ptr<RnnLm> RnnLm::load(const std::string& dir) {
  std::ifstream metaf(fs::path(dir) / "meta.json");
  if (!metaf) throw DataError("load rnn lm: missing meta.json in " + dir);
  json meta = json::parse(metaf);
  const std::string kind_s = meta["kind"].get<std::string>();
  Kind kind = kind_s.rfind("word_lstm", 0) == 0 ? Kind::kWord : Kind::kChar;
  Vocab vocab = Vocab::from_words(meta["vocab"].get<std::vector<std::string>>());
  const auto& c = meta["config"];
  NeuralLmConfig cfg;
  cfg.embed_dim = c["embed_dim"].get<std::size_t>();
  cfg.hidden_dim = c["hidden_dim"].get<std::size_t>();
  cfg.dropout = c["dropout"].get<double>();
  cfg.epochs = c["epochs"].get<std::size_t>();
  cfg.learning_rate = c["learning_rate"].get<double>();
  cfg.seed = c["seed"].get<std::uint64_t>();
  cfg.mtl_weight = c["mtl_weight"].get<double>();
  cfg.char_embed_dim = c["char_embed_dim"].get<std::size_t>();
  cfg.char_hidden_dim = c["char_hidden_dim"].get<std::size_t>();
  std::optional<MtlSpec> mtl;
  if (meta.contains("mtl")) {
    MtlSpec spec;
    spec.n_classes = meta["mtl"]["n_classes"].get<std::size_t>();
    for (const auto& [k, v] : meta["mtl"]["class_of"].items()) {
      spec.class_of[std::stoi(k)] = v.get<int>();
    }
    mtl = std::move(spec);
  }
  auto model = std::make_unique<RnnLm>(kind, vocab, cfg, std::move(mtl));
  ParamMap p = model->params();
  load_checkpoint((fs::path(dir) / "params.ckpt").string(), p);
  return model;
}

// ---------------------------------------------------------------------------

DccLm::DccLm(const Vocab& vocab, const NeuralLmConfig& cfg)
    : vocab_(vocab), cfg_(cfg) {
  if (cfg_.conv_kernel != 2) {
    throw ConfigError("word_dcc: causal convolutions use kernel 2 (past tap + current)");
  }
  if (cfg_.dilations.empty()) throw ConfigError("word_dcc: empty dilation schedule");
  const std::size_t H = cfg_.hidden_dim;
  Rng rng(derive_seed(cfg_.seed, "dcc.embed"));
  embed_ = init_uniform({vocab_.size(), H}, 0.1, rng);
  for (std::size_t i = 0; i < cfg_.dilations.size(); ++i) {
    const std::string base = "dcc.conv" + std::to_string(i);
    CausalConv cc;
    Rng r1(derive_seed(cfg_.seed, base + ".prev"));
    cc.W_prev = init_uniform({H, H}, 1.0 / std::sqrt(static_cast<double>(H)), r1);
    Rng r2(derive_seed(cfg_.seed, base + ".cur"));
    cc.W_cur = init_uniform({H, H}, 1.0 / std::sqrt(static_cast<double>(H)), r2);
    cc.b = Tensor::zeros({H}, true);
    cc.dilation = cfg_.dilations[i];
    convs_.push_back(std::move(cc));
  }
  fc_ = Linear(H, H, derive_seed(cfg_.seed, "dcc.fc"));
  out_ = Linear(H, vocab_.size(), derive_seed(cfg_.seed, "dcc.out"));
}

std::size_t DccLm::receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t d : cfg_.dilations) rf += d * (cfg_.conv_kernel - 1);
  return rf;
}

Tensor DccLm::forward_ids(const std::vector<int>& inputs) {
  const std::size_t N = inputs.size();
  const std::size_t H = cfg_.hidden_dim;
  Tensor emb = embed(embed_, inputs);
  std::vector<Tensor> rows;
  rows.reserve(N);
  for (std::size_t t = 0; t < N; ++t) rows.push_back(slice_rows(emb, t, t + 1));

  Tensor zero_row = Tensor::zeros({1, H});
  for (const auto& cc : convs_) {
    std::vector<Tensor> next;
    next.reserve(N);
    for (std::size_t t = 0; t < N; ++t) {
      Tensor prev = t >= cc.dilation ? rows[t - cc.dilation] : zero_row;
      Tensor h = add_rows(add(matmul(prev, cc.W_prev), matmul(rows[t], cc.W_cur)),
                          cc.b);
      next.push_back(add(relu(h), rows[t]));  // residual across the conv block
    }
    rows = std::move(next);
  }
  std::vector<Tensor> fc_rows;
  fc_rows.reserve(N);
  for (std::size_t t = 0; t < N; ++t) {
    fc_rows.push_back(add(relu(fc_.forward(rows[t])), rows[t]));
  }
  return mask_bos(out_.forward(concat_rows(fc_rows)), vocab_.bos());
}

std::vector<double> DccLm::next_distribution(const std::vector<int>& history) const {
  auto* self = const_cast<DccLm*>(this);
  return softmax_last_row(self->forward_ids(history));
}

gradcore::ParamMap DccLm::params() const {
  ParamMap p;
  p.add("embed", embed_);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string base = "conv" + std::to_string(i);
    p.add(base + ".W_prev", convs_[i].W_prev);
    p.add(base + ".W_cur", convs_[i].W_cur);
    p.add(base + ".b", convs_[i].b);
  }
  fc_.collect(p, "fc");
  out_.collect(p, "out");
  return p;
}

double DccLm::train_epoch(const std::vector<std::vector<int>>& id_sentences) {
  if (!opt_) {
    opt_ = std::make_unique<Optimizer>(OptimizerConfig{
        .kind = OptKind::kAdam, .learning_rate = cfg_.learning_rate});
  }
  ParamMap all = params();
  auto list = all.tensors();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& sent : id_sentences) {
    std::vector<int> inputs{vocab_.bos()};
    inputs.insert(inputs.end(), sent.begin(), sent.end());
    std::vector<int> targets(sent.begin(), sent.end());
    targets.push_back(vocab_.eos());
    all.zero_grads();
    Tensor loss = softmax_cross_entropy(forward_ids(inputs), targets);
    backward(loss);
    opt_->step(list);
    total += loss.item();
    ++count;
  }
  const double mean = count ? total / static_cast<double>(count) : 0.0;
  if (!std::isfinite(mean)) throw TrainingError("word_dcc: loss diverged");
  return mean;
}

void DccLm::save(const std::string& dir) const {
  fs::create_directories(dir);
  json meta;
  meta["kind"] = "word_dcc";
  meta["version"] = 1;
  meta["vocab"] = vocab_.words();
  meta["config"] = {{"hidden_dim", cfg_.hidden_dim},
                    {"epochs", cfg_.epochs},
                    {"learning_rate", cfg_.learning_rate},
                    {"seed", cfg_.seed},
                    {"dilations", cfg_.dilations},
                    {"conv_kernel", cfg_.conv_kernel}};
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(1) << "\n";
  save_checkpoint((fs::path(dir) / "params.ckpt").string(), params());
}

std::unique_ptr<DccLm> DccLm::load(const std::string& dir) {
  std::ifstream metaf(fs::path(dir) / "meta.json");
  if (!metaf) throw DataError("load dcc lm: missing meta.json in " + dir);
  json meta = json::parse(metaf);
  Vocab vocab = Vocab::from_words(meta["vocab"].get<std::vector<std::string>>());
  const auto& c = meta["config"];
  NeuralLmConfig cfg;
  cfg.hidden_dim = c["hidden_dim"].get<std::size_t>();
  cfg.epochs = c["epochs"].get<std::size_t>();
  cfg.learning_rate = c["learning_rate"].get<double>();
  cfg.seed = c["seed"].get<std::uint64_t>();
  cfg.dilations = c["dilations"].get<std::vector<std::size_t>>();
  cfg.conv_kernel = c["conv_kernel"].get<std::size_t>();
  auto model = std::make_unique<DccLm>(vocab, cfg);
  ParamMap p = model->params();
  load_checkpoint((fs::path(dir) / "params.ckpt").string(), p);
  return model;
}

}  // namespace deskasr::lm
