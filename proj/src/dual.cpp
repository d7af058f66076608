#include "dlseg/dual.hpp"

#include <array>
#include <future>

#include "dlseg/errors.hpp"
#include "dlseg/rng.hpp"

namespace dlseg::fuse {

void PipelineBundle::validate() const {
  if (!image.seg) throw ConfigError("pipeline bundle has no image-level segmentation model");
  if (image.seg->class_count() != split.class_count())
    throw ConfigError("image-level model predicts " + std::to_string(image.seg->class_count()) + " classes but the split has " +
                      std::to_string(split.class_count()));
  if (detector) {
    if (!region.seg) throw ConfigError("pipeline bundle has a detector but no region-level model");
    if (region.seg->class_count() != split.region_class_count())
      throw ConfigError("region-level model predicts " + std::to_string(region.seg->class_count()) +
                        " classes but the split needs " + std::to_string(split.region_class_count()));
  }
  if (keep < 0) throw ConfigError("proposal keep must be >= 0");
}

DualResult infer_dual(const PipelineBundle& bundle, const Image& img, bool parallel) {
  bundle.validate();
  auto run_image = [&] { return bundle.image.predict(img); };
  auto run_detector = [&] {
    return bundle.detector ? proposals::propose(*bundle.detector, img, bundle.keep) : std::vector<proposals::Proposal>{};
  };
  DualResult out;
  std::vector<proposals::Proposal> props;
  if (parallel) {
    auto fi = std::async(std::launch::async, run_image);
    auto fd = std::async(std::launch::async, run_detector);
    out.p_img = fi.get();
    props = fd.get();
  } else {
    out.p_img = run_image();
    props = run_detector();
  }

  std::vector<RegionalPrediction> regional;
  for (const auto& p : props) {
    const Box box = proposals::to_pixel_box(p.box, img.height, img.width);
    if (box.w <= 0 || box.h <= 0) continue;
    regional.push_back({box, p.score, bundle.region.predict_box(img, box)});
  }
  auto merged = merge(out.p_img, regional, bundle.split, bundle.policy);
  out.final_mask = std::move(merged.mask);
  for (std::size_t i = 0; i < regional.size(); ++i) {
    BoxDiagnostics d{regional[i].box, regional[i].score, merged.overwritten[i],
                     std::vector<long>(static_cast<std::size_t>(bundle.split.class_count()), 0)};
    const Box& b = regional[i].box;
    for (int y = b.y; y < b.bottom(); ++y)
      for (int x = b.x; x < b.right(); ++x) {
        const int c = out.final_mask.at(y, x);
        if (c < bundle.split.class_count()) ++d.histogram[static_cast<std::size_t>(c)];
      }
    out.boxes.push_back(std::move(d));
  }
  return out;
}

std::array<float, 3> class_color(int class_id) {
  const auto h = mix64(static_cast<std::uint64_t>(class_id) + 17);
  return {static_cast<float>(0.2 + 0.8 * ((h & 0xff) / 255.0)), static_cast<float>(0.2 + 0.8 * (((h >> 8) & 0xff) / 255.0)),
          static_cast<float>(0.2 + 0.8 * (((h >> 16) & 0xff) / 255.0))};
}

Image overlay(const Image& img, const LabelMask& mask) {
  if (img.height != mask.height || img.width != mask.width) throw ValidationError("overlay: image and mask differ in shape");
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int c = mask.at(y, x);
      if (c == kIgnoreLabel) continue;
      const auto col = class_color(c);
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = 0.5f * img.at(y, x, k) + 0.5f * col[static_cast<std::size_t>(k)];
    }
  return out;
}

}  // namespace dlseg::fuse
