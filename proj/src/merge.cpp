#include "dlseg/merge.hpp"

#include <algorithm>
#include <numeric>

#include "dlseg/errors.hpp"

namespace dlseg::fuse {

MergePolicy parse_merge_policy(const std::string& s) {
  if (s == "gated") return MergePolicy::Gated;
  if (s == "unconditional") return MergePolicy::Unconditional;
  throw ConfigError("unknown merge policy '" + s + "' (expected gated or unconditional)");
}

std::string merge_policy_name(MergePolicy p) { return p == MergePolicy::Gated ? "gated" : "unconditional"; }

MergeResult merge(const ProbMap& p_img, const std::vector<RegionalPrediction>& regional, const hardmine::ClassSplit& split,
                  MergePolicy policy) {
  if (p_img.channels != split.class_count())
    throw ValidationError("merge: image-level map has " + std::to_string(p_img.channels) + " channels, split has " +
                          std::to_string(split.class_count()) + " classes");
  MergeResult out{p_img.argmax(), std::vector<long>(regional.size(), 0)};

  std::vector<std::size_t> order(regional.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = regional[a];
    const auto& rb = regional[b];
    if (ra.score != rb.score) return ra.score < rb.score;
    return ra.box < rb.box;
  });

  for (std::size_t idx : order) {
    const RegionalPrediction& r = regional[idx];
    if (!r.box.inside(p_img.height, p_img.width)) throw ValidationError("merge: regional box outside image");
    if (r.probs.height != r.box.h || r.probs.width != r.box.w)
      throw ValidationError("merge: regional map shape does not match its box");
    if (r.probs.channels != split.region_class_count())
      throw ValidationError("merge: regional map must have K+1 channels");
    long changed = 0;
    for (int dy = 0; dy < r.box.h; ++dy) {
      for (int dx = 0; dx < r.box.w; ++dx) {
        auto px = r.probs.pixel(dy, dx);
        const auto best = std::max_element(px.begin(), px.end()) - px.begin();
        if (best == 0) continue;
        const int cls = split.full_label(static_cast<int>(best));
        const int y = r.box.y + dy;
        const int x = r.box.x + dx;
        std::uint8_t& cur = out.mask.at(y, x);
        if (policy == MergePolicy::Gated && !(px[static_cast<std::size_t>(best)] > p_img.at(y, x, cur))) continue;
        if (cur != cls) ++changed;
        cur = static_cast<std::uint8_t>(cls);
      }
    }
    out.overwritten[idx] = changed;
  }
  return out;
}

}  // namespace dlseg::fuse
