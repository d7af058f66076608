#include "dlseg/branches.hpp"

#include "dlseg/errors.hpp"

namespace dlseg::fuse {

ProbMap ImageBranch::predict(const Image& img) const {
  if (!seg) throw PreconditionError("image branch has no segmentation model");
  return seg::predict_multiscale(*seg, relam ? relam->adapt(img) : img, ratios);
}

void RegionBranch::require_trained() const {
  if (!seg || !seg->trained()) throw PreconditionError("region-level segmentation model is missing or untrained");
  if (relam && !relam->trained()) throw PreconditionError("region-level light adaptation is untrained");
}

ProbMap RegionBranch::predict_box(const Image& img, const Box& box) const {
  if (!seg) throw PreconditionError("region branch has no segmentation model");
  if (!box.inside(img.height, img.width)) throw ValidationError("region box lies outside the image");
  Image zoomed = hardmine::zoom_crop(img, box, zoom_height, zoom_width);
  if (relam) zoomed = relam->adapt(zoomed);
  return resize_bilinear(seg::predict_multiscale(*seg, zoomed, ratios), box.h, box.w);
}

}  // namespace dlseg::fuse
