#pragma once

// The two prediction branches of dual-level inference. Both hold non-owning pointers
// to frozen models; light adaptation is optional in each.

#include <vector>

#include "dlseg/hardmine.hpp"
#include "dlseg/raster.hpp"
#include "dlseg/relam.hpp"
#include "dlseg/segcore.hpp"

namespace dlseg::fuse {

/// P^I = predict_multiscale(seg, adapt(image)).
struct ImageBranch {
  relam::RelamNets* relam = nullptr;
  const seg::SegModel* seg = nullptr;
  std::vector<double> ratios = seg::kDefaultRatios;

  ProbMap predict(const Image& img) const;
};

/// Crop a box, zoom it, adapt, predict over {other, hard...}, and resize back to the box.
struct RegionBranch {
  relam::RelamNets* relam = nullptr;
  const seg::SegModel* seg = nullptr;
  int zoom_height = 64;
  int zoom_width = 64;
  std::vector<double> ratios = {1.0};

  /// PreconditionError unless the region model (and its light adaptation, if set) is trained.
  void require_trained() const;
  /// Probabilities at the box's size; `box` must lie inside the image.
  ProbMap predict_box(const Image& img, const Box& box) const;
};

}  // namespace dlseg::fuse
