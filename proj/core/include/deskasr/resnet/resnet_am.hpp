#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deskasr/corpus/corpus.hpp"
#include "deskasr/gradcore/batchnorm.hpp"
#include "deskasr/gradcore/checkpoint.hpp"
#include "deskasr/gradcore/conv.hpp"
#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::resnet {

enum class BlockKind { kBasic, kBottleneck };

struct StageSpec {
  std::size_t maps = 0;  // 3x3 width; bottleneck blocks output 4*maps
  std::size_t blocks = 1;
  BlockKind kind = BlockKind::kBasic;
  std::size_t stride_f = 1, stride_t = 1;  // initStride, first block only
  std::size_t pool_f = 1, pool_t = 1;      // trailing maxpool window (1 = none)
};

struct ResNetSpec {
  std::size_t in_channels = 3;
  std::size_t mel_bins = 64;
  std::size_t stage0_maps = 64;
  std::size_t stage0_kf = 5, stage0_kt = 5;
  std::size_t stage0_pool_f = 2, stage0_pool_t = 1;
  std::vector<StageSpec> stages;
  std::vector<std::size_t> fc_dims;  // hidden sizes before the state layer
  std::size_t fc_time_kernel = 3;    // frames consumed by the first FC
  std::size_t n_states = 32000;
  std::uint64_t seed = 1;

  // Copy with stage0/stage/fc widths divided (mel bins and kernels kept).
  ResNetSpec scaled(std::size_t width_divisor) const;
};

// Table-style architecture columns (a)-(d) at full scale.
ResNetSpec table_column_spec(char column, std::size_t n_states = 32000);

ResNetSpec parse_arch_json(const std::string& text);
std::string arch_to_json(const ResNetSpec& spec);

// Residual convolutional acoustic model over C x F x T feature maps.
// Convolutions are frequency-padded but never time-padded; identity
// shortcuts crop symmetrically in time, projection shortcuts crop to the
// conv path's one-sided receptive offset before their strided 1x1 conv.
// In windowed mode every time stride is literal; to_dilated() sets the
// strides to 1 and multiplies all downstream time dilations (convolutions,
// pooling and the FC stack) for dense prediction.
class ResNetAm {
 public:
  explicit ResNetAm(const ResNetSpec& spec);

  const ResNetSpec& spec() const { return spec_; }
  bool dense() const { return dense_; }

  // Exact receptive field: the window length with no wasted frames.
  std::size_t required_context() const;
  // Largest window still producing exactly one prediction (floor slack
  // of the strided layers; equals required_context when nothing strides).
  std::size_t max_input_window() const;
  std::size_t param_count() const { return params().total_size(); }

  // One CD-state distribution (logits) for a window whose length lies in
  // [required_context, max_input_window]. Input C x F x T flattened.
  std::vector<double> forward_window(const std::vector<double>& window, std::size_t T);
  // Dense prediction on a converted model: (T - context + 1) x n_states.
  std::vector<double> forward_dense(const std::vector<double>& utt_maps, std::size_t T);

  // Batched training forward (windowed): input B x C x F x ctx, logits
  // B x n_states as a graph tensor.
  gradcore::Tensor forward_batch(const gradcore::Tensor& input, gradcore::BnMode mode);

  // Geometry transforms; parameter tensors are shared with *this, running
  // statistics are copied, so convert after warm-up/training.
  ResNetAm to_dilated() const;
  ResNetAm to_windowed() const;

  gradcore::ParamMap params() const;

  // Structural description of the time geometry (tests, inversion checks).
  struct TimeUnit {
    std::string name;
    std::size_t kernel_t = 1, stride_t = 1, dil_t = 1;
  };
  std::vector<TimeUnit> time_units() const;

  // Feeds one train-mode batch through the net so running statistics exist;
  // needed before eval-mode inference on an untrained model.
  void warm_up_statistics();

  // Test hook: runs a single residual block on a B x C x F x T input.
  gradcore::Tensor eval_block(std::size_t index, const gradcore::Tensor& x,
                              gradcore::BnMode mode);
  std::size_t block_count() const { return blocks_.size(); }

  // Running-statistic buffers exposed for checkpointing.
  std::vector<std::pair<std::string, std::vector<double>*>> stat_buffers();
  void mark_stats_initialized();

 private:
  struct ConvUnit {
    gradcore::Tensor W;  // O x C x kF x kT
    gradcore::Tensor b;  // undefined when batch norm precedes the conv
    std::size_t stride_f = 1, stride_t = 1, dil_t = 1;
    gradcore::FreqPad pad = gradcore::FreqPad::kSame;
  };
  struct Block {
    BlockKind kind = BlockKind::kBasic;
    std::vector<gradcore::BatchNormFreq> bns;  // pre-activation, one per conv
    std::vector<ConvUnit> convs;
    bool has_projection = false;
    ConvUnit proj;
  };
  struct PoolUnit {
    std::size_t after_block = 0;  // index into blocks_
    gradcore::Pool2dOptions opt;
  };

  gradcore::Tensor run(const gradcore::Tensor& input, gradcore::BnMode mode);
  gradcore::Tensor run_block(Block& blk, const gradcore::Tensor& x,
                             gradcore::BnMode mode);
  // One-sided time crop of the block's shortcut: (receptive span - 1)/2 of
  // the conv path, dilation-aware.
  static std::size_t block_crop(const Block& blk);
  std::size_t output_len(std::size_t T) const;  // floor semantics, 0 if too short

  ResNetSpec spec_;
  bool dense_ = false;
  ConvUnit conv0_;
  gradcore::Pool2dOptions pool0_;
  std::vector<Block> blocks_;
  std::vector<PoolUnit> pools_;
  gradcore::BatchNormFreq final_bn_;
  std::vector<ConvUnit> fc_;  // first consumes F x fc_time_kernel, rest 1x1
};

struct ResNetTrainSchedule {
  std::size_t steps = 600;
  std::size_t batch_size = 8;
  double learning_rate = 0.03;  // Nesterov defaults from the training recipe
  double momentum = 0.99;
  double balance_exponent = 0.8;
  std::uint64_t seed = 1;
  int delta_order = 2;  // input channels = 1 + delta_order
};

struct ResNetTrainResult {
  std::vector<double> losses;  // mean loss per 50-step interval
};

// Windowed cross-entropy training on class-balanced center frames.
ResNetTrainResult train_resnet(ResNetAm& model, const corpus::Corpus& corpus,
                               const ResNetTrainSchedule& schedule);

// Frame accuracy over [from, to): dense evaluation of each utterance,
// labels compared at the window centers.
double resnet_frame_accuracy(ResNetAm& model, const corpus::Corpus& corpus,
                             std::size_t from, std::size_t to, int delta_order);

void save_resnet_model(ResNetAm& model, const std::string& dir);
ResNetAm load_resnet_model(const std::string& dir);

}  // namespace deskasr::resnet
