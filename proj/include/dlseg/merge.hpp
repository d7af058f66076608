#pragma once

// Fusion of regional (hard-class) predictions into the image-level mask.

#include <vector>

#include "dlseg/hardmine.hpp"
#include "dlseg/raster.hpp"

namespace dlseg::fuse {

enum class MergePolicy {
  Gated,          // overwrite only where the regional confidence beats the image-level one
  Unconditional,  // overwrite wherever the regional argmax is a hard class
};

MergePolicy parse_merge_policy(const std::string& s);
std::string merge_policy_name(MergePolicy p);

/// A regional probability map already resized to its box, over {0 = other, 1..K = hard}.
struct RegionalPrediction {
  Box box;
  double score = 0.0;
  ProbMap probs;
};

struct MergeResult {
  LabelMask mask;
  /// Overwritten pixel count per regional input, in input order.
  std::vector<long> overwritten;
};

/// Start from argmax(p_img); visit boxes by ascending (score, box) so the highest-scoring box
/// wins overlaps. Inside a box a pixel takes the regional hard class when that class is not
/// "other" and (for the gated policy) its regional probability exceeds p_img's probability of
/// the pixel's current class.
MergeResult merge(const ProbMap& p_img, const std::vector<RegionalPrediction>& regional, const hardmine::ClassSplit& split,
                  MergePolicy policy = MergePolicy::Gated);

}  // namespace dlseg::fuse
