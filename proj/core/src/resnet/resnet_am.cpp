#include "deskasr/resnet/resnet_am.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "deskasr/corpus/features.hpp"
#include "deskasr/corpus/sampler.hpp"
#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"
#include "deskasr/gradcore/optimizer.hpp"
#include "deskasr/gradcore/nn.hpp"
#include "deskasr/gradcore/rng.hpp"

namespace deskasr::resnet {

namespace fs = std::filesystem;
using namespace deskasr::gradcore;
using nlohmann::json;

ResNetSpec ResNetSpec::scaled(std::size_t width_divisor) const {
  ResNetSpec s = *this;
  auto div = [width_divisor](std::size_t v) {
    return std::max<std::size_t>(1, v / width_divisor);
  };
  s.stage0_maps = div(s.stage0_maps);
  for (auto& st : s.stages) st.maps = div(st.maps);
  for (auto& d : s.fc_dims) d = div(d);
  return s;
}

ResNetSpec table_column_spec(char column, std::size_t n_states) {
  ResNetSpec s;
  s.in_channels = 3;
  s.mel_bins = 64;
  s.stage0_maps = 64;
  s.fc_dims = {2084, 2084, 2084, 1024};
  s.fc_time_kernel = 3;
  s.n_states = n_states;
  const BlockKind kind = column == 'a' ? BlockKind::kBottleneck : BlockKind::kBasic;
  const std::size_t blocks = column == 'c' ? 2 : 3;
  const bool timestride = column == 'c' || column == 'd';
  s.stages = {
      {64, blocks, kind, 1, 1, 1, 1},
      {128, blocks, kind, 2, 1, 1, 1},
      {256, blocks, kind, 2, 1, 1, 1},
      {512, blocks, kind, 2, timestride ? 2u : 1u, 2,
       timestride ? 2u : 1u},
  };
  if (column == 'a') {
    // Bottleneck column: no trailing time pool, frequency pool only.
    s.stages.back().pool_f = 2;
    s.stages.back().pool_t = 1;
  }
  if (column != 'a' && column != 'b' && column != 'c' && column != 'd') {
    throw ConfigError("table_column_spec: column must be one of a,b,c,d");
  }
  return s;
}

namespace {

Tensor conv_init(std::size_t O, std::size_t C, std::size_t kF, std::size_t kT,
                 std::uint64_t seed) {
  Rng rng(seed);
  const double r = 1.0 / std::sqrt(static_cast<double>(C * kF * kT));
  return init_uniform({O, C, kF, kT}, r, rng);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

ResNetAm::ResNetAm(const ResNetSpec& spec) : spec_(spec) {
  if (spec_.stages.empty()) throw ConfigError("resnet: no stages");
  for (const auto& st : spec_.stages) {
    if (st.maps == 0 || st.blocks == 0) {
      throw ConfigError("resnet: stage widths and block counts must be >= 1");
    }
  }
  if (spec_.fc_time_kernel < 1) throw ConfigError("resnet: fc_time_kernel must be >= 1");

  std::size_t C = spec_.in_channels;
  std::size_t F = spec_.mel_bins;

  conv0_.W = conv_init(spec_.stage0_maps, C, spec_.stage0_kf, spec_.stage0_kt,
                       derive_seed(spec_.seed, "conv0"));
  conv0_.b = Tensor::zeros({spec_.stage0_maps}, true);
  C = spec_.stage0_maps;

  pool0_ = Pool2dOptions{.win_f = spec_.stage0_pool_f,
                         .win_t = spec_.stage0_pool_t,
                         .stride_f = spec_.stage0_pool_f,
                         .stride_t = spec_.stage0_pool_t};
  F = (F - pool0_.win_f) / pool0_.stride_f + 1;

  for (std::size_t si = 0; si < spec_.stages.size(); ++si) {
    const auto& st = spec_.stages[si];
    const std::size_t out_maps =
        st.kind == BlockKind::kBasic ? st.maps : 4 * st.maps;
    for (std::size_t bi = 0; bi < st.blocks; ++bi) {
      Block blk;
      blk.kind = st.kind;
      const bool first = bi == 0;
      const std::size_t s_f = first ? st.stride_f : 1;
      const std::size_t s_t = first ? st.stride_t : 1;
      const std::string base =
          "block" + std::to_string(blocks_.size());
      auto add_conv = [&](std::size_t idx, std::size_t in_c, std::size_t out_c,
                          std::size_t k, std::size_t cs_f, std::size_t cs_t) {
        blk.bns.emplace_back(in_c, F);
        ConvUnit u;
        u.W = conv_init(out_c, in_c, k, k,
                        derive_seed(spec_.seed, base + ".conv" + std::to_string(idx)));
        u.stride_f = cs_f;
        u.stride_t = cs_t;
        blk.convs.push_back(std::move(u));
        F = ceil_div(F, cs_f);
      };
      if (st.kind == BlockKind::kBasic) {
        add_conv(0, C, st.maps, 3, s_f, s_t);
        add_conv(1, st.maps, st.maps, 3, 1, 1);
      } else {
        add_conv(0, C, st.maps, 1, 1, 1);
        add_conv(1, st.maps, st.maps, 3, s_f, s_t);
        add_conv(2, st.maps, out_maps, 1, 1, 1);
      }
      blk.has_projection = C != out_maps || s_f != 1 || s_t != 1;
      if (blk.has_projection) {
        blk.proj.W = conv_init(out_maps, C, 1, 1, derive_seed(spec_.seed, base + ".proj"));
        blk.proj.stride_f = s_f;
        blk.proj.stride_t = s_t;
      }
      C = out_maps;
      blocks_.push_back(std::move(blk));
    }
    if (st.pool_f > 1 || st.pool_t > 1) {
      pools_.push_back({blocks_.size() - 1,
                        Pool2dOptions{.win_f = st.pool_f,
                                      .win_t = st.pool_t,
                                      .stride_f = st.pool_f,
                                      .stride_t = st.pool_t}});
      F = (F - st.pool_f) / st.pool_f + 1;
    }
  }

  final_bn_ = BatchNormFreq(C, F);

  std::size_t in_c = C;
  for (std::size_t j = 0; j <= spec_.fc_dims.size(); ++j) {
    const bool first = j == 0;
    const std::size_t out_c =
        j < spec_.fc_dims.size() ? spec_.fc_dims[j] : spec_.n_states;
    ConvUnit u;
    u.W = conv_init(out_c, in_c, first ? F : 1, first ? spec_.fc_time_kernel : 1,
                    derive_seed(spec_.seed, "fc" + std::to_string(j)));
    u.b = Tensor::zeros({out_c}, true);
    u.pad = FreqPad::kNone;
    fc_.push_back(std::move(u));
    in_c = out_c;
  }
}

std::size_t ResNetAm::block_crop(const Block& blk) {
  std::size_t span = 1;
  std::size_t stride_prod = 1;
  for (const auto& u : blk.convs) {
    const std::size_t k = u.W.dim(3);
    span += (k - 1) * u.dil_t * stride_prod;
    stride_prod *= u.stride_t;
  }
  if ((span - 1) % 2 != 0) {
    throw CropError("resnet block: odd receptive span, cannot crop symmetrically");
  }
  return (span - 1) / 2;
}

std::vector<ResNetAm::TimeUnit> ResNetAm::time_units() const {
  std::vector<TimeUnit> units;
  units.push_back({"conv0", spec_.stage0_kt, conv0_.stride_t, conv0_.dil_t});
  if (pool0_.win_t > 1 || pool0_.win_f > 1) {
    units.push_back({"pool0", pool0_.win_t, pool0_.stride_t, pool0_.dil_t});
  }
  std::size_t pi = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for (std::size_t k = 0; k < blocks_[i].convs.size(); ++k) {
      const auto& u = blocks_[i].convs[k];
      units.push_back({"block" + std::to_string(i) + ".conv" + std::to_string(k),
                       u.W.dim(3), u.stride_t, u.dil_t});
    }
    while (pi < pools_.size() && pools_[pi].after_block == i) {
      units.push_back({"pool" + std::to_string(pi + 1), pools_[pi].opt.win_t,
                       pools_[pi].opt.stride_t, pools_[pi].opt.dil_t});
      ++pi;
    }
  }
  units.push_back({"fc0", spec_.fc_time_kernel, 1, fc_[0].dil_t});
  return units;
}

std::size_t ResNetAm::required_context() const {
  auto units = time_units();
  std::size_t ctx = 1;
  for (auto it = units.rbegin(); it != units.rend(); ++it) {
    ctx = (ctx - 1) * it->stride_t + it->dil_t * (it->kernel_t - 1) + 1;
  }
  return ctx;
}

std::size_t ResNetAm::output_len(std::size_t T) const {
  auto units = time_units();
  std::size_t len = T;
  for (const auto& u : units) {
    const std::size_t span = u.dil_t * (u.kernel_t - 1) + 1;
    if (len < span) return 0;
    len = (len - span) / u.stride_t + 1;
  }
  return len;
}

std::size_t ResNetAm::max_input_window() const {
  std::size_t T = required_context();
  while (output_len(T + 1) == 1) ++T;
  return T;
}

Tensor ResNetAm::run_block(Block& blk, const Tensor& x, BnMode mode) {
  Tensor a = relu(blk.bns[0].forward(x, mode));
  Tensor y = a;
  for (std::size_t k = 0; k < blk.convs.size(); ++k) {
    if (k > 0) y = relu(blk.bns[k].forward(y, mode));
    const auto& u = blk.convs[k];
    y = conv2d(y, u.W, Tensor(),
               Conv2dOptions{.stride_f = u.stride_f,
                             .stride_t = u.stride_t,
                             .dil_t = u.dil_t,
                             .pad_freq = u.pad});
  }
  const std::size_t crop = block_crop(blk);
  Tensor shortcut;
  if (blk.has_projection) {
    Tensor cropped = crop == 0 ? a : crop_time(a, crop, crop);
    shortcut = conv2d(cropped, blk.proj.W, Tensor(),
                      Conv2dOptions{.stride_f = blk.proj.stride_f,
                                    .stride_t = blk.proj.stride_t,
                                    .dil_t = 1,
                                    .pad_freq = FreqPad::kSame});
  } else {
    shortcut = crop_time_symmetric(x, y.dim(3));
  }
  if (shortcut.dim(3) != y.dim(3)) {
    throw CropError("resnet block: shortcut time extent " +
                    std::to_string(shortcut.dim(3)) + " does not match conv path " +
                    std::to_string(y.dim(3)));
  }
  return add(y, shortcut);
}

Tensor ResNetAm::run(const Tensor& input, BnMode mode) {
  Tensor x = conv2d(input, conv0_.W, conv0_.b,
                    Conv2dOptions{.stride_f = conv0_.stride_f,
                                  .stride_t = conv0_.stride_t,
                                  .dil_t = conv0_.dil_t,
                                  .pad_freq = FreqPad::kSame});
  if (pool0_.win_f > 1 || pool0_.win_t > 1) x = maxpool2d(x, pool0_);
  std::size_t pi = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = run_block(blocks_[i], x, mode);
    while (pi < pools_.size() && pools_[pi].after_block == i) {
      x = maxpool2d(x, pools_[pi].opt);
      ++pi;
    }
  }
  x = relu(final_bn_.forward(x, mode));
  for (std::size_t j = 0; j < fc_.size(); ++j) {
    const auto& u = fc_[j];
    x = conv2d(x, u.W, u.b,
               Conv2dOptions{.stride_f = 1,
                             .stride_t = 1,
                             .dil_t = u.dil_t,
                             .pad_freq = FreqPad::kNone});
    if (j + 1 < fc_.size()) x = relu(x);
  }
  return x;  // B x n_states x 1 x T_out
}

std::vector<double> ResNetAm::forward_window(const std::vector<double>& window,
                                             std::size_t T) {
  const std::size_t ctx = required_context();
  const std::size_t mx = max_input_window();
  if (T < ctx || T > mx) {
    throw ContextError("forward_window: window of " + std::to_string(T) +
                       " frames; this model needs " + std::to_string(ctx) +
                       (mx != ctx ? " (up to " + std::to_string(mx) + ")" : "") +
                       " frames");
  }
  Tensor in = Tensor::from({1, spec_.in_channels, spec_.mel_bins, T},
                           std::vector<double>(window));
  Tensor out = run(in, BnMode::kEval);
  return std::vector<double>(out.value().begin(), out.value().end());
}

std::vector<double> ResNetAm::forward_dense(const std::vector<double>& utt_maps,
                                            std::size_t T) {
  if (!dense_) {
    throw ConfigError("forward_dense: model is windowed; call to_dilated() first");
  }
  const std::size_t ctx = required_context();
  if (T < ctx) {
    throw ContextError("forward_dense: utterance of " + std::to_string(T) +
                       " frames shorter than context " + std::to_string(ctx));
  }
  Tensor in = Tensor::from({1, spec_.in_channels, spec_.mel_bins, T},
                           std::vector<double>(utt_maps));
  Tensor out = run(in, BnMode::kEval);  // 1 x S x 1 x (T-ctx+1)
  const std::size_t S = spec_.n_states;
  const std::size_t rows = out.dim(3);
  std::vector<double> res(rows * S);
  auto v = out.value();
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < rows; ++t) res[t * S + s] = v[s * rows + t];
  }
  return res;
}

Tensor ResNetAm::forward_batch(const Tensor& input, BnMode mode) {
  Tensor out = run(input, mode);  // B x S x 1 x 1
  if (out.dim(3) != 1) {
    throw ContextError("forward_batch: batch window does not reduce to one frame");
  }
  const std::size_t B = out.dim(0), S = out.dim(1);
  std::vector<Tensor> dummy;
  // reshape B x S x 1 x 1 -> B x S (values are already in row-major order)
  return make_op({B, S}, std::vector<double>(out.value().begin(), out.value().end()),
                 {out}, [](detail::Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (std::size_t i = 0; i < n.grad.size(); ++i)
                     p->grad[i] += n.grad[i];
                 });
}

ResNetAm ResNetAm::to_dilated() const {
  ResNetAm m = *this;
  std::size_t acc = 1;
  auto convert_conv = [&acc](ConvUnit& u) {
    u.dil_t *= acc;
    if (u.stride_t > 1) {
      acc *= u.stride_t;
      u.stride_t = 1;
    }
  };
  convert_conv(m.conv0_);
  {
    auto& p = m.pool0_;
    p.dil_t *= acc;
    if (p.stride_t > 1) {
      acc *= p.stride_t;
      p.stride_t = 1;
    }
  }
  std::size_t pi = 0;
  for (std::size_t i = 0; i < m.blocks_.size(); ++i) {
    auto& blk = m.blocks_[i];
    const std::size_t acc_at_block = acc;
    for (auto& u : blk.convs) convert_conv(u);
    if (blk.has_projection) {
      // The projection follows the recipe too; dilation of a 1x1 kernel has
      // no geometric effect but is kept for uniformity.
      blk.proj.dil_t = acc_at_block;
      blk.proj.stride_t = 1;
    }
    while (pi < m.pools_.size() && m.pools_[pi].after_block == i) {
      auto& p = m.pools_[pi].opt;
      p.dil_t *= acc;
      if (p.stride_t > 1) {
        acc *= p.stride_t;
        p.stride_t = 1;
      }
      ++pi;
    }
  }
  for (auto& u : m.fc_) u.dil_t *= acc;
  m.dense_ = true;
  return m;
}

ResNetAm ResNetAm::to_windowed() const {
  ResNetAm m = *this;
  // Recover strides from the dilation products: a unit's original stride is
  // the ratio between the next time unit's dilation and its own.
  std::vector<ConvUnit*> chain;
  std::vector<Pool2dOptions*> pool_chain;
  struct Entry {
    std::size_t dil;
    std::size_t* stride;
    std::size_t* dil_field;
  };
  std::vector<Entry> entries;
  entries.push_back({m.conv0_.dil_t, &m.conv0_.stride_t, &m.conv0_.dil_t});
  entries.push_back({m.pool0_.dil_t, &m.pool0_.stride_t, &m.pool0_.dil_t});
  std::size_t pi = 0;
  for (std::size_t i = 0; i < m.blocks_.size(); ++i) {
    for (auto& u : m.blocks_[i].convs) {
      entries.push_back({u.dil_t, &u.stride_t, &u.dil_t});
    }
    while (pi < m.pools_.size() && m.pools_[pi].after_block == i) {
      auto& p = m.pools_[pi].opt;
      entries.push_back({p.dil_t, &p.stride_t, &p.dil_t});
      ++pi;
    }
  }
  entries.push_back({m.fc_[0].dil_t, nullptr, &m.fc_[0].dil_t});
  for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
    const std::size_t d = entries[i].dil, dn = entries[i + 1].dil;
    if (dn % d != 0) {
      throw ConfigError("to_windowed: dilation chain is not a stride product");
    }
    if (entries[i].stride) *entries[i].stride = dn / d;
    *entries[i].dil_field = 1;
  }
  *entries.back().dil_field = 1;
  // Projections regain the product of their block's conv strides.
  for (auto& blk : m.blocks_) {
    if (!blk.has_projection) continue;
    std::size_t s = 1;
    for (const auto& u : blk.convs) s *= u.stride_t;
    blk.proj.stride_t = s;
    blk.proj.dil_t = 1;
  }
  for (auto& u : m.fc_) u.dil_t = 1;
  m.dense_ = false;
  return m;
}

ParamMap ResNetAm::params() const {
  ParamMap p;
  p.add("conv0.W", conv0_.W);
  p.add("conv0.b", conv0_.b);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& blk = blocks_[i];
    const std::string base = "block" + std::to_string(i);
    for (std::size_t k = 0; k < blk.convs.size(); ++k) {
      p.add(base + ".bn" + std::to_string(k) + ".gamma", blk.bns[k].gamma());
      p.add(base + ".bn" + std::to_string(k) + ".beta", blk.bns[k].beta());
      p.add(base + ".conv" + std::to_string(k) + ".W", blk.convs[k].W);
    }
    if (blk.has_projection) p.add(base + ".proj.W", blk.proj.W);
  }
  p.add("final_bn.gamma", final_bn_.gamma());
  p.add("final_bn.beta", final_bn_.beta());
  for (std::size_t j = 0; j < fc_.size(); ++j) {
    p.add("fc" + std::to_string(j) + ".W", fc_[j].W);
    p.add("fc" + std::to_string(j) + ".b", fc_[j].b);
  }
  return p;
}

std::vector<std::pair<std::string, std::vector<double>*>> ResNetAm::stat_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for (std::size_t k = 0; k < blocks_[i].bns.size(); ++k) {
      const std::string base =
          "block" + std::to_string(i) + ".bn" + std::to_string(k);
      out.emplace_back(base + ".mean", &blocks_[i].bns[k].running_mean());
      out.emplace_back(base + ".var", &blocks_[i].bns[k].running_var());
    }
  }
  out.emplace_back("final_bn.mean", &final_bn_.running_mean());
  out.emplace_back("final_bn.var", &final_bn_.running_var());
  return out;
}

void ResNetAm::mark_stats_initialized() {
  for (auto& blk : blocks_) {
    for (auto& bn : blk.bns) bn.mark_initialized();
  }
  final_bn_.mark_initialized();
}

Tensor ResNetAm::eval_block(std::size_t index, const Tensor& x, BnMode mode) {
  return run_block(blocks_.at(index), x, mode);
}

void ResNetAm::warm_up_statistics() {
  const std::size_t T = dense_ ? required_context() : max_input_window();
  Rng rng(derive_seed(spec_.seed, "warmup"));
  std::vector<double> x(2 * spec_.in_channels * spec_.mel_bins * T);
  for (auto& v : x) v = rng.normal();
  Tensor in = Tensor::from({2, spec_.in_channels, spec_.mel_bins, T}, std::move(x));
  run(in, BnMode::kTrain);
}

ResNetTrainResult train_resnet(ResNetAm& model, const corpus::Corpus& corpus,
                               const ResNetTrainSchedule& schedule) {
  const std::size_t ctx = model.required_context();
  const std::size_t left = (ctx - 1) / 2;
  const std::size_t right = ctx - 1 - left;
  const int delta_order = schedule.delta_order;
  if (1 + static_cast<std::size_t>(delta_order) != model.spec().in_channels) {
    throw ConfigError("train_resnet: delta_order does not match input channels");
  }

  // Index of valid window centers per state class (train split only).
  const std::size_t train_end = corpus.utterances.size() * 8 / 10;
  struct Center {
    std::size_t utt;
    std::size_t t;
  };
  std::vector<std::vector<Center>> by_class(model.spec().n_states);
  std::vector<std::vector<double>> maps(train_end);
  for (std::size_t i = 0; i < train_end; ++i) {
    const auto& u = corpus.utterances[i];
    maps[i] = corpus::utt_to_channels(u, delta_order, 2);
    if (u.T < ctx) continue;
    for (std::size_t t = left; t + right < u.T; ++t) {
      by_class[static_cast<std::size_t>(u.labels[t])].push_back({i, t});
    }
  }
  std::vector<std::size_t> counts(by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) counts[c] = by_class[c].size();
  corpus::BalancedSampler sampler(counts, {.exponent = schedule.balance_exponent},
                                  derive_seed(schedule.seed, "resnet.sampler"));
  Rng pick_rng(derive_seed(schedule.seed, "resnet.pick"));

  Optimizer opt({.kind = OptKind::kNesterov,
                 .learning_rate = schedule.learning_rate,
                 .momentum = schedule.momentum});
  auto param_map = model.params();
  auto param_list = param_map.tensors();

  const std::size_t C = model.spec().in_channels;
  const std::size_t F = model.spec().mel_bins;
  ResNetTrainResult result;
  double interval_loss = 0.0;
  std::size_t interval_n = 0;
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    const std::size_t B = schedule.batch_size;
    std::vector<double> batch(B * C * F * ctx);
    std::vector<int> labels(B);
    for (std::size_t b = 0; b < B; ++b) {
      const int cls = sampler.next();
      const auto& centers = by_class[static_cast<std::size_t>(cls)];
      const auto& c = centers[pick_rng.below(centers.size())];
      labels[b] = cls;
      const auto& m = maps[c.utt];
      const std::size_t T = corpus.utterances[c.utt].T;
      const std::size_t t0 = c.t - left;
      for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t f = 0; f < F; ++f) {
          const double* src = m.data() + (ch * F + f) * T + t0;
          std::copy_n(src, ctx, batch.data() + ((b * C + ch) * F + f) * ctx);
        }
      }
    }
    param_map.zero_grads();
    Tensor in = Tensor::from({B, C, F, ctx}, std::move(batch));
    Tensor logits = model.forward_batch(in, BnMode::kTrain);
    Tensor loss = softmax_cross_entropy(logits, labels);
    if (!std::isfinite(loss.item())) {
      throw TrainingError("train_resnet: loss diverged at step " + std::to_string(step));
    }
    backward(loss);
    opt.step(param_list);
    interval_loss += loss.item();
    if (++interval_n == 50 || step + 1 == schedule.steps) {
      result.losses.push_back(interval_loss / static_cast<double>(interval_n));
      interval_loss = 0.0;
      interval_n = 0;
    }
  }
  return result;
}

double resnet_frame_accuracy(ResNetAm& model, const corpus::Corpus& corpus,
                             std::size_t from, std::size_t to, int delta_order) {
  ResNetAm dense = model.dense() ? model : model.to_dilated();
  const std::size_t ctx = dense.required_context();
  const std::size_t left = (ctx - 1) / 2;
  const std::size_t S = model.spec().n_states;
  std::size_t correct = 0, total = 0;
  for (std::size_t i = from; i < to && i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    if (u.T < ctx) continue;
    auto maps = corpus::utt_to_channels(u, delta_order, 2);
    auto logits = dense.forward_dense(maps, u.T);
    const std::size_t rows = u.T - ctx + 1;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto* row = logits.data() + r * S;
      const std::size_t arg = std::max_element(row, row + S) - row;
      if (static_cast<int>(arg) == u.labels[r + left]) ++correct;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

ResNetSpec parse_arch_json(const std::string& text) {
  json j = json::parse(text);
  ResNetSpec s;
  s.in_channels = j["input"].value("channels", 3);
  s.mel_bins = j["input"].value("mel_bins", 64);
  const auto& s0 = j["stage0"];
  s.stage0_maps = s0.value("maps", 64);
  if (s0.contains("conv")) {
    s.stage0_kf = s0["conv"][0].get<std::size_t>();
    s.stage0_kt = s0["conv"][1].get<std::size_t>();
  }
  if (s0.contains("maxpool")) {
    s.stage0_pool_f = s0["maxpool"][0].get<std::size_t>();
    s.stage0_pool_t = s0["maxpool"][1].get<std::size_t>();
  }
  for (const auto& st : j["stages"]) {
    StageSpec sp;
    sp.maps = st["maps"].get<std::size_t>();
    sp.blocks = st["blocks"].get<std::size_t>();
    const std::string kind = st.value("kind", "basic");
    if (kind == "basic") {
      sp.kind = BlockKind::kBasic;
    } else if (kind == "bottleneck") {
      sp.kind = BlockKind::kBottleneck;
    } else {
      throw ConfigError("arch: unknown block kind '" + kind + "'");
    }
    if (st.contains("init_stride")) {
      sp.stride_f = st["init_stride"][0].get<std::size_t>();
      sp.stride_t = st["init_stride"][1].get<std::size_t>();
    }
    if (st.contains("maxpool")) {
      sp.pool_f = st["maxpool"][0].get<std::size_t>();
      sp.pool_t = st["maxpool"][1].get<std::size_t>();
    }
    s.stages.push_back(sp);
  }
  s.fc_dims = j["fc"].get<std::vector<std::size_t>>();
  s.fc_time_kernel = j.value("fc_time_kernel", 3);
  s.n_states = j["n_states"].get<std::size_t>();
  s.seed = j.value("seed", 1);
  if (j.contains("width_divisor")) s = s.scaled(j["width_divisor"].get<std::size_t>());
  return s;
}

std::string arch_to_json(const ResNetSpec& s) {
  json j;
  j["input"] = {{"channels", s.in_channels}, {"mel_bins", s.mel_bins}};
  j["stage0"] = {{"maps", s.stage0_maps},
                 {"conv", {s.stage0_kf, s.stage0_kt}},
                 {"maxpool", {s.stage0_pool_f, s.stage0_pool_t}}};
  j["stages"] = json::array();
  for (const auto& st : s.stages) {
    j["stages"].push_back(
        {{"maps", st.maps},
         {"blocks", st.blocks},
         {"kind", st.kind == BlockKind::kBasic ? "basic" : "bottleneck"},
         {"init_stride", {st.stride_f, st.stride_t}},
         {"maxpool", {st.pool_f, st.pool_t}}});
  }
  j["fc"] = s.fc_dims;
  j["fc_time_kernel"] = s.fc_time_kernel;
  j["n_states"] = s.n_states;
  j["seed"] = s.seed;
  return j.dump(1);
}

void save_resnet_model(ResNetAm& model, const std::string& dir) {
  fs::create_directories(dir);
  json meta;
  meta["kind"] = "resnet_am";
  meta["version"] = 1;
  meta["dense"] = model.dense();
  meta["arch"] = json::parse(arch_to_json(model.spec()));
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(1) << "\n";
  ParamMap all = model.params();
  for (auto& [name, buf] : model.stat_buffers()) {
    all.add("stats." + name, Tensor::from({buf->size()}, *buf));
  }
  save_checkpoint((fs::path(dir) / "params.ckpt").string(), all);
}

ResNetAm load_resnet_model(const std::string& dir) {
  std::ifstream metaf(fs::path(dir) / "meta.json");
  if (!metaf) throw DataError("load_resnet_model: missing meta.json in " + dir);
  json meta = json::parse(metaf);
  if (meta.value("kind", "") != "resnet_am") {
    throw DataError("load_resnet_model: " + dir + " is not a resnet_am model");
  }
  ResNetAm model(parse_arch_json(meta["arch"].dump()));
  ParamMap expected = model.params();
  for (auto& [name, buf] : model.stat_buffers()) {
    expected.add("stats." + name, Tensor::zeros({buf->size()}, true));
  }
  load_checkpoint((fs::path(dir) / "params.ckpt").string(), expected);
  for (auto& [name, buf] : model.stat_buffers()) {
    Tensor* t = expected.find("stats." + name);
    *buf = std::vector<double>(t->value().begin(), t->value().end());
  }
  model.mark_stats_initialized();
  if (meta.value("dense", false)) model = model.to_dilated();
  return model;
}

}  // namespace deskasr::resnet
