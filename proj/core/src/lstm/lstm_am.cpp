#include "deskasr/lstm/lstm_am.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/rng.hpp"

namespace deskasr::lstm {

namespace fs = std::filesystem;
using namespace deskasr::gradcore;
using nlohmann::json;

LstmAm::LstmAm(LstmAmConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.cells_per_layer % 2 != 0) {
    throw ConfigError("lstm_am: cells_per_layer must be even (split across directions)");
  }
  if (cfg_.n_layers < 1 || cfg_.bottleneck_dim < 1 || cfg_.n_states < 1) {
    throw ConfigError("lstm_am: all dimensions must be >= 1");
  }
  const std::size_t H = cfg_.cells_per_layer / 2;
  std::size_t in_dim = cfg_.features.fused_dim();
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string base = "lstm.l" + std::to_string(l);
    layers_.push_back({LstmLayer(in_dim, H, derive_seed(cfg_.seed, base + ".fw")),
                       LstmLayer(in_dim, H, derive_seed(cfg_.seed, base + ".bw"))});
    in_dim = cfg_.cells_per_layer;
  }
  bottleneck_ = Linear(cfg_.cells_per_layer, cfg_.bottleneck_dim,
                       derive_seed(cfg_.seed, "bottleneck"));
  output_ = Linear(cfg_.bottleneck_dim, cfg_.n_states, derive_seed(cfg_.seed, "output"));
  if (cfg_.speaker_dim > 0) {
    spk1_ = Linear(cfg_.cells_per_layer, cfg_.speaker_head_hidden,
                   derive_seed(cfg_.seed, "spkhead.l1"));
    spk2_ = Linear(cfg_.speaker_head_hidden, cfg_.speaker_dim,
                   derive_seed(cfg_.seed, "spkhead.l2"));
  }
}

LstmAm::TrunkOut LstmAm::run_trunk(const WindowBatch& batch) const {
  if (batch.F != fused_dim()) {
    throw SpecError("lstm_am: batch feature dim " + std::to_string(batch.F) +
                    " does not match fused dim " + std::to_string(fused_dim()));
  }
  const std::size_t B = batch.B, T = batch.T, F = batch.F;
  std::vector<Tensor> steps(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> x(B * F);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(batch.frames.begin() + (b * T + t) * F, F, x.begin() + b * F);
    }
    steps[t] = Tensor::from({B, F}, std::move(x));
  }
  for (const auto& layer : layers_) {
    std::vector<Tensor> fw = layer.fw.run(steps);
    std::vector<Tensor> rev(steps.rbegin(), steps.rend());
    std::vector<Tensor> bw = layer.bw.run(rev);
    for (std::size_t t = 0; t < T; ++t) {
      steps[t] = concat_cols(fw[t], bw[T - 1 - t]);
    }
  }
  return {std::move(steps)};
}

Tensor LstmAm::main_logits(const TrunkOut& trunk) const {
  std::vector<Tensor> rows;
  rows.reserve(trunk.frames.size());
  for (const auto& h : trunk.frames) {
    rows.push_back(output_.forward(bottleneck_.forward(h)));
  }
  return concat_rows(rows);
}

Tensor LstmAm::speaker_out(const TrunkOut& trunk, double grl_lambda) const {
  std::vector<Tensor> rows;
  rows.reserve(trunk.frames.size());
  for (const auto& h : trunk.frames) {
    Tensor in = grl_lambda != 0.0 ? gradient_reversal(h, grl_lambda) : h;
    rows.push_back(tanh_op(spk2_.forward(sigmoid(spk1_.forward(in)))));
  }
  return concat_rows(rows);
}

Tensor LstmAm::speaker_targets(const WindowBatch& batch) const {
  const std::size_t B = batch.B, T = batch.T, D = cfg_.speaker_dim;
  std::vector<double> tgt(T * B * D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(batch.speaker.begin() + b * D, D, tgt.begin() + (t * B + b) * D);
    }
  }
  return Tensor::from({T * B, D}, std::move(tgt));
}

std::vector<double> LstmAm::forward(const std::vector<double>& window,
                                    std::size_t T) const {
  WindowBatch batch;
  batch.B = 1;
  batch.T = T;
  batch.F = fused_dim();
  batch.frames = window;
  Tensor logits = main_logits(run_trunk(batch));
  return std::vector<double>(logits.value().begin(), logits.value().end());
}

std::vector<double> LstmAm::trunk_activations(const std::vector<double>& window,
                                              std::size_t T) const {
  WindowBatch batch;
  batch.B = 1;
  batch.T = T;
  batch.F = fused_dim();
  batch.frames = window;
  TrunkOut trunk = run_trunk(batch);
  std::vector<double> out;
  out.reserve(T * cfg_.cells_per_layer);
  for (const auto& h : trunk.frames) {
    out.insert(out.end(), h.value().begin(), h.value().end());
  }
  return out;
}

namespace {

void sgd_update(ParamMap& params, double lr) {
  for (auto& [name, t] : params.items) {
    if (!t.has_grad()) {
      throw ConsistencyError("lstm_am: parameter " + name + " missing gradient");
    }
    auto g = t.grad();
    auto& v = t.raw();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

std::vector<std::vector<double>> snapshot_grads(const ParamMap& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.items.size());
  for (const auto& [name, t] : params.items) {
    if (!t.has_grad()) {
      throw ConsistencyError("lstm_am: parameter " + name + " missing gradient");
    }
    out.push_back(t.grad_copy());
  }
  return out;
}

}  // namespace

SaMtlLosses LstmAm::sa_mtl_step(const WindowBatch& batch, double lr, double lambda) {
  if (cfg_.speaker_dim == 0) {
    throw ConfigError("sa_mtl_step: model has no speaker head");
  }
  if (batch.speaker.empty()) {
    throw DataError("sa_mtl_step: batch carries no speaker vectors");
  }
  ParamMap trunk = trunk_params();
  ParamMap main = main_params();
  ParamMap spk = speaker_params();

  // Backward pass 1: cross-entropy through trunk + main head.
  ParamMap all = params();
  all.zero_grads();
  TrunkOut t1 = run_trunk(batch);
  Tensor ce = softmax_cross_entropy(main_logits(t1), batch.labels, batch.mask);
  backward(ce);
  auto g_ce_trunk = snapshot_grads(trunk);
  sgd_update(main, lr);  // theta_c <- theta_c - lr * dCE/dtheta_c

  // Backward pass 2: MSE through trunk + speaker head.
  all.zero_grads();
  TrunkOut t2 = run_trunk(batch);
  Tensor mse_loss = mse(speaker_out(t2, 0.0), speaker_targets(batch), batch.mask);
  backward(mse_loss);
  sgd_update(spk, lr);  // theta_s <- theta_s - lr * dMSE/dtheta_s

  // theta <- theta - lr * (dCE/dtheta - lambda * dMSE/dtheta)
  for (std::size_t i = 0; i < trunk.items.size(); ++i) {
    auto& t = trunk.items[i].second;
    auto g_mse = t.grad();
    auto& v = t.raw();
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] -= lr * (g_ce_trunk[i][j] - lambda * g_mse[j]);
    }
  }
  return {ce.item(), mse_loss.item()};
}

SaMtlLosses LstmAm::sa_mtl_step_reversal(const WindowBatch& batch, double lr,
                                         double lambda) {
  if (cfg_.speaker_dim == 0) {
    throw ConfigError("sa_mtl_step_reversal: model has no speaker head");
  }
  if (batch.speaker.empty()) {
    throw DataError("sa_mtl_step_reversal: batch carries no speaker vectors");
  }
  ParamMap all = params();
  all.zero_grads();
  TrunkOut trunk = run_trunk(batch);
  Tensor ce = softmax_cross_entropy(main_logits(trunk), batch.labels, batch.mask);
  Tensor mse_loss = mse(speaker_out(trunk, lambda), speaker_targets(batch), batch.mask);
  Tensor combined = add(ce, mse_loss);
  backward(combined);
  sgd_update(all, lr);
  return {ce.item(), mse_loss.item()};
}

double LstmAm::sgd_ce_step(const WindowBatch& batch, double lr) {
  ParamMap trunk = trunk_params();
  ParamMap main = main_params();
  ParamMap all = params();
  all.zero_grads();
  Tensor ce = softmax_cross_entropy(main_logits(run_trunk(batch)), batch.labels,
                                    batch.mask);
  backward(ce);
  sgd_update(main, lr);
  sgd_update(trunk, lr);
  return ce.item();
}

LstmAm LstmAm::discard_speaker_head() const {
  LstmAmConfig cfg = cfg_;
  cfg.speaker_dim = 0;
  LstmAm pruned(cfg);
  pruned.layers_ = layers_;        // shared parameter storage
  pruned.bottleneck_ = bottleneck_;
  pruned.output_ = output_;
  return pruned;
}

ParamMap LstmAm::params() const {
  ParamMap p = trunk_params();
  p.append(main_params());
  p.append(speaker_params());
  return p;
}

ParamMap LstmAm::trunk_params() const {
  ParamMap p;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].fw.collect(p, "lstm.l" + std::to_string(l) + ".fw");
    layers_[l].bw.collect(p, "lstm.l" + std::to_string(l) + ".bw");
  }
  return p;
}

ParamMap LstmAm::main_params() const {
  ParamMap p;
  bottleneck_.collect(p, "bottleneck");
  output_.collect(p, "output");
  return p;
}

ParamMap LstmAm::speaker_params() const {
  ParamMap p;
  if (cfg_.speaker_dim > 0) {
    spk1_.collect(p, "spkhead.l1");
    spk2_.collect(p, "spkhead.l2");
  }
  return p;
}

std::vector<WindowBatch> batch_windows(const LstmAm& model,
                                       const corpus::Corpus& corpus,
                                       std::size_t from, std::size_t to,
                                       std::size_t subseq_len,
                                       std::size_t batch_size) {
  const std::size_t F = model.fused_dim();
  const std::size_t D = model.config().speaker_dim;
  struct Win {
    corpus::Subsequence sub;
    const corpus::Utterance* utt;
  };
  std::vector<Win> wins;
  for (std::size_t i = from; i < to && i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    auto fused = corpus::fuse_features(u, model.config().features);
    auto subs = corpus::make_subsequences(fused, u.labels, u.T, F, subseq_len);
    for (auto& s : subs) wins.push_back({std::move(s), &u});
  }
  std::vector<WindowBatch> batches;
  for (std::size_t w0 = 0; w0 < wins.size(); w0 += batch_size) {
    const std::size_t B = std::min(batch_size, wins.size() - w0);
    WindowBatch batch;
    batch.B = B;
    batch.T = subseq_len;
    batch.F = F;
    batch.frames.resize(B * subseq_len * F);
    batch.labels.resize(subseq_len * B);
    batch.mask.resize(subseq_len * B);
    if (D > 0) batch.speaker.resize(B * D);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& w = wins[w0 + b];
      std::copy_n(w.sub.frames.begin(), subseq_len * F,
                  batch.frames.begin() + b * subseq_len * F);
      for (std::size_t t = 0; t < subseq_len; ++t) {
        batch.labels[t * B + b] = w.sub.labels[t];
        batch.mask[t * B + b] = w.sub.mask[t];
      }
      if (D > 0) {
        std::copy_n(w.utt->speaker_vector.begin(), D, batch.speaker.begin() + b * D);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

TrainResult train(LstmAm& model, const corpus::Corpus& corpus,
                  const TrainSchedule& schedule) {
  const std::size_t train_end = corpus.utterances.size() * 8 / 10;
  auto batches = batch_windows(model, corpus, 0, train_end, schedule.subseq_len,
                               schedule.batch_size);
  if (batches.empty()) throw DataError("train: corpus produced no batches");

  Rng shuffle_rng(derive_seed(schedule.seed, "train.shuffle"));
  std::vector<std::size_t> order(batches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double ce_sum = 0.0, mse_sum = 0.0;
    for (std::size_t i : order) {
      if (model.config().speaker_dim > 0) {
        auto losses = model.sa_mtl_step(batches[i], schedule.learning_rate,
                                        schedule.lambda);
        ce_sum += losses.ce;
        mse_sum += losses.mse;
      } else {
        ce_sum += model.sgd_ce_step(batches[i], schedule.learning_rate);
      }
    }
    const double ce_mean = ce_sum / static_cast<double>(batches.size());
    if (!std::isfinite(ce_mean)) {
      throw TrainingError("train: loss diverged at epoch " + std::to_string(epoch));
    }
    result.epoch_ce.push_back(ce_mean);
    result.epoch_mse.push_back(mse_sum / static_cast<double>(batches.size()));
  }
  return result;
}

double frame_accuracy(const LstmAm& model, const corpus::Corpus& corpus,
                      std::size_t from, std::size_t to, std::size_t subseq_len) {
  const std::size_t F = model.fused_dim();
  const std::size_t C = model.config().n_states;
  std::size_t correct = 0, total = 0;
  for (std::size_t i = from; i < to && i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    auto fused = corpus::fuse_features(u, model.config().features);
    auto subs = corpus::make_subsequences(fused, u.labels, u.T, F, subseq_len);
    for (const auto& s : subs) {
      auto logits = model.forward(s.frames, subseq_len);
      for (std::size_t t = 0; t < s.real_frames; ++t) {
        const auto row = logits.begin() + static_cast<std::ptrdiff_t>(t * C);
        const std::size_t arg = std::max_element(row, row + C) - row;
        if (static_cast<int>(arg) == s.labels[t]) ++correct;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

void save_lstm_model(const LstmAm& model, const std::string& dir) {
  fs::create_directories(dir);
  const auto& cfg = model.config();
  json meta;
  meta["kind"] = "lstm_am";
  meta["version"] = 1;
  json streams = json::array();
  for (const auto& s : cfg.features.streams) {
    streams.push_back({{"name", s.name}, {"dim", s.dim}, {"delta_order", s.delta_order}});
  }
  meta["config"] = {{"n_layers", cfg.n_layers},
                    {"cells_per_layer", cfg.cells_per_layer},
                    {"bottleneck_dim", cfg.bottleneck_dim},
                    {"n_states", cfg.n_states},
                    {"speaker_dim", cfg.speaker_dim},
                    {"speaker_head_hidden", cfg.speaker_head_hidden},
                    {"seed", cfg.seed},
                    {"streams", streams},
                    {"delta_window", cfg.features.delta_window}};
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(1) << "\n";
  save_checkpoint((fs::path(dir) / "params.ckpt").string(), model.params());
}

LstmAm load_lstm_model(const std::string& dir) {
  std::ifstream metaf(fs::path(dir) / "meta.json");
  if (!metaf) throw DataError("load_lstm_model: missing meta.json in " + dir);
  json meta = json::parse(metaf);
  if (meta.value("kind", "") != "lstm_am") {
    throw DataError("load_lstm_model: " + dir + " is not an lstm_am model");
  }
  const auto& c = meta["config"];
  LstmAmConfig cfg;
  cfg.n_layers = c["n_layers"].get<std::size_t>();
  cfg.cells_per_layer = c["cells_per_layer"].get<std::size_t>();
  cfg.bottleneck_dim = c["bottleneck_dim"].get<std::size_t>();
  cfg.n_states = c["n_states"].get<std::size_t>();
  cfg.speaker_dim = c["speaker_dim"].get<std::size_t>();
  cfg.speaker_head_hidden = c["speaker_head_hidden"].get<std::size_t>();
  cfg.seed = c["seed"].get<std::uint64_t>();
  cfg.features.delta_window = c["delta_window"].get<std::size_t>();
  for (const auto& s : c["streams"]) {
    cfg.features.streams.push_back({s["name"].get<std::string>(),
                                    s["dim"].get<std::size_t>(),
                                    s["delta_order"].get<int>()});
  }
  LstmAm model(cfg);
  ParamMap p = model.params();
  load_checkpoint((fs::path(dir) / "params.ckpt").string(), p);
  return model;
}

}  // namespace deskasr::lstm
