#pragma once

// Dual-level inference: image-level prediction, hard-region proposals, region-level
// prediction on zoomed crops, and the merge back into the global mask.

#include <array>
#include <vector>

#include "dlseg/branches.hpp"
#include "dlseg/detector.hpp"
#include "dlseg/merge.hpp"

namespace dlseg::fuse {

struct PipelineBundle {
  ImageBranch image;
  const proposals::Detector* detector = nullptr;  // null: no proposals, image-level output only
  RegionBranch region;
  hardmine::ClassSplit split;
  MergePolicy policy = MergePolicy::Gated;
  int keep = 10;

  /// ConfigError when the model class spaces disagree with the split.
  void validate() const;
};

struct BoxDiagnostics {
  Box box;
  double score = 0;
  long overwritten = 0;
  std::vector<long> histogram;  // final-mask pixel count per class inside the box
};

struct DualResult {
  LabelMask final_mask;
  ProbMap p_img;
  std::vector<BoxDiagnostics> boxes;
};

/// With `parallel`, the image branch and the detector run on separate threads;
/// the result is identical to the sequential path.
DualResult infer_dual(const PipelineBundle& bundle, const Image& img, bool parallel = false);

/// Deterministic display colour for a class id.
std::array<float, 3> class_color(int class_id);

/// Half-transparent class colours over the image; ignore pixels are left as is.
Image overlay(const Image& img, const LabelMask& mask);

}  // namespace dlseg::fuse
