#pragma once

// Segmentation models: a pluggable backbone behind SegModel, cross-entropy with an
// ignore label, training-time augmentation, multi-scale prediction and training.

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dlseg/checkpoint.hpp"
#include "dlseg/hardmine.hpp"
#include "dlseg/kvconfig.hpp"
#include "dlseg/nets.hpp"
#include "dlseg/raster.hpp"
#include "dlseg/relam.hpp"
#include "dlseg/rng.hpp"

namespace dlseg::seg {

inline const std::vector<double> kDefaultRatios = {0.25, 0.5, 0.75, 1.0, 1.25};

class SegModel {
 public:
  /// Model predicting classes 0..class_count-1 with the named backbone.
  SegModel(int class_count, const std::string& arch = "toy", int width = 16, std::uint64_t seed = 0);

  /// Region-level model: class space {0 = other, 1..K = hard classes of `split`}.
  static SegModel for_region(const hardmine::ClassSplit& split, const std::string& arch = "toy", int width = 16,
                             std::uint64_t seed = 0);

  int class_count() const { return class_count_; }
  std::vector<int> class_space() const;
  int downsampling() const { return net_->downsampling(); }
  const std::string& arch() const { return arch_; }
  int width() const { return width_; }

  long trained_steps = 0;
  bool trained() const { return trained_steps > 0; }

  nets::SegNetwork& network() { return *net_; }
  const nets::SegNetwork& network() const { return *net_; }

  /// Logits [N, C, H, W] for a [N, 3, H, W] batch.
  torch::Tensor logits(const torch::Tensor& x) const;
  /// Single-scale softmax probabilities at the image's resolution.
  ProbMap predict(const Image& img) const;

  void write(Checkpoint& ckpt) const;
  static SegModel read(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static SegModel load(const std::filesystem::path& path);

 private:
  int class_count_;
  std::string arch_;
  int width_;
  std::shared_ptr<nets::SegNetwork> net_;
};

struct SegLoss {
  torch::Tensor loss;
  bool all_ignored = false;  // every pixel carried the ignore label; loss is 0
};

/// Mean cross-entropy over non-ignore pixels. logits [N, C, H, W], labels [N, H, W] int64.
SegLoss seg_loss(const torch::Tensor& logits, const torch::Tensor& labels);

struct AugmentConfig {
  double scale_min = 0.5;
  double scale_max = 2.0;
  double flip_prob = 0.5;
  double brightness = 0.1;  // additive, drawn from [-b, b]
  double contrast = 0.2;    // multiplicative about the mean, [1 - c, 1 + c]
  int crop_height = 64;
  int crop_width = 128;

  void validate() const;
  static AugmentConfig from_config(const KvConfig& cfg, const std::string& prefix);
  void write(KvConfig& cfg, const std::string& prefix) const;
};

/// Scale ratio drawn uniformly from [scale_min, scale_max).
double sample_scale(const AugmentConfig& cfg, Rng& rng);

/// Random scale, horizontal flip, photometric jitter, then a crop (padding images with 0
/// and masks with the ignore label when the scaled image is smaller than the crop).
std::pair<Image, LabelMask> augment(const Image& img, const LabelMask& mask, const AugmentConfig& cfg, Rng& rng);

/// Brightness/contrast jitter only; masks are untouched by construction.
Image photometric_jitter(const Image& img, const AugmentConfig& cfg, Rng& rng);

/// Average of per-ratio predictions, each resized back to native resolution.
/// Ratios are visited in sorted order so the result does not depend on list order.
ProbMap predict_multiscale(const SegModel& model, const Image& img, std::vector<double> ratios = kDefaultRatios);

struct SegTrainConfig {
  std::string arch = "toy";
  int width = 16;
  long steps = 400;
  int batch = 4;
  double lr = 2e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  AugmentConfig augment;

  void validate() const;
  static SegTrainConfig from_config(const KvConfig& cfg, const std::string& prefix);
  void write(KvConfig& cfg, const std::string& prefix) const;
};

struct LabeledImage {
  Image image;
  LabelMask labels;
};

struct SegTrainOptions {
  /// Where checkpoints (`step_<n>.ckpt`) and `loss.jsonl` go; empty disables both.
  std::filesystem::path out_dir;
  /// Continue from a checkpoint written by an earlier run with the same config.
  std::optional<std::filesystem::path> resume_from;
  /// Sees every model input batch [N, 3, H, W] before the forward pass.
  std::function<void(const torch::Tensor&)> on_batch;
  /// Frozen light adaptation applied to every training image before augmentation.
  relam::RelamNets* relam = nullptr;
};

struct SegTrainResult {
  SegModel model;
  std::vector<double> losses;  // one entry per step run in this call
};

/// Labels must lie in [0, class_count) or be the ignore label (ValidationError otherwise).
SegTrainResult train_segmenter(const std::vector<LabeledImage>& data, int class_count, const SegTrainConfig& cfg,
                               const SegTrainOptions& opts = {});

}  // namespace dlseg::seg
