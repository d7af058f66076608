#pragma once

// Anchor-based region proposal network with binary hard/easy objectness.

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "dlseg/boxes.hpp"
#include "dlseg/kvconfig.hpp"
#include "dlseg/nets.hpp"
#include "dlseg/rng.hpp"

namespace dlseg::proposals {

struct AnchorConfig {
  int stride = 8;
  std::vector<double> scales = {8, 16, 32};
  std::vector<double> ratios = {0.5, 1.0, 2.0};  // height / width

  int per_location() const { return static_cast<int>(scales.size() * ratios.size()); }
};

/// Anchors for a feat_h x feat_w map, ordered by (row, column, scale, ratio).
std::vector<BoxF> make_anchors(int feat_h, int feat_w, const AnchorConfig& cfg);

struct DetectorConfig {
  int width = 32;
  AnchorConfig anchors;
  long steps = 600;
  int batch = 4;
  double lr = 1e-3;
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  int samples_per_image = 64;
  double positive_fraction = 0.5;
  double beta = 1.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;
  double nms_threshold = 0.7;
  int keep = 10;
  int pre_nms = 200;
  double min_size = 2.0;

  void validate() const;
  static DetectorConfig from_config(const KvConfig& cfg, const std::string& prefix);
  void write(KvConfig& cfg, const std::string& prefix) const;
};

/// Per-anchor training targets: label -1 (ignored), 0 (negative), 1 (positive).
struct AnchorTargets {
  torch::Tensor labels;   // [M] int64
  torch::Tensor targets;  // [M, 4] float32 regression targets (zero for non-positives)
};

/// IoU >= positive_iou with a positive box, or the best anchor of a positive box, is
/// positive; max IoU <= negative_iou is negative; the rest is ignored. Positives and
/// negatives are then subsampled to samples_per_image.
AnchorTargets assign_anchors(const std::vector<BoxF>& anchors, const std::vector<BoxF>& positives,
                             const DetectorConfig& cfg, Rng& rng);

struct DetectorLoss {
  torch::Tensor reg;
  torch::Tensor cls;
  torch::Tensor total;
};

/// L_reg: smooth-L1 summed over coordinates, averaged over positive anchors (0 when none).
/// L_cls: binary cross-entropy averaged over labelled anchors. L_det = L_reg + L_cls.
DetectorLoss detector_loss(const torch::Tensor& cls_logits, const torch::Tensor& reg, const torch::Tensor& labels,
                           const torch::Tensor& targets, double beta = 1.0);

class Detector {
 public:
  explicit Detector(const DetectorConfig& cfg = {});

  mutable nets::DetectorNet net{nullptr};  // forward() is non-const in libtorch
  DetectorConfig config;
  long trained_steps = 0;

  bool trained() const { return trained_steps > 0; }

  void save(const std::filesystem::path& path) const;
  static Detector load(const std::filesystem::path& path);
};

struct DetectorSample {
  Image image;
  std::vector<Proposal> boxes;  // labelled pseudo boxes; only positives drive anchors
};

/// Writes one JSON record per step (step, L_reg, L_cls, L_det) to `log_path` when given.
Detector train_detector(const std::vector<DetectorSample>& data, const DetectorConfig& cfg,
                        const std::filesystem::path& log_path = {});

/// Decoded, clamped, size-filtered, NMS-reduced proposals, at most `keep`.
std::vector<Proposal> propose(const Detector& det, const Image& img, int keep);
inline std::vector<Proposal> propose(const Detector& det, const Image& img) { return propose(det, img, det.config.keep); }

/// Fraction of `targets` covered by some proposal with IoU >= iou_threshold.
double recall(const std::vector<std::vector<Proposal>>& proposals, const std::vector<std::vector<BoxF>>& targets,
              double iou_threshold = 0.5);

}  // namespace dlseg::proposals
