#pragma once

// Hardness-detection relabelling: a proposal is positive when the region-level model
// segments the hard classes inside it better than the image-level model does.

#include <functional>
#include <string>
#include <vector>

#include "dlseg/boxes.hpp"
#include "dlseg/branches.hpp"

namespace dlseg::proposals {

enum class HdmRule {
  RegionBetter,  // positive iff IoU(P^R) > IoU(P^I)
  ImageBetter,   // inverted rule, for comparison
};

HdmRule parse_hdm_rule(const std::string& s);
std::string hdm_rule_name(HdmRule r);

/// Positive iff the preferred level's IoU is strictly larger; ties are negative.
Label hdm_label(double region_iou, double image_iou, HdmRule rule = HdmRule::RegionBetter);

/// Region-space probabilities for `box`, already at the box's size.
using RegionPredictor = std::function<ProbMap(const Image& img, const Box& box)>;

struct HdmScore {
  double region_iou = 0;
  double image_iou = 0;
};

/// Relabel proposals by comparing in-box hard-class IoU of the region prediction against
/// argmax(p_img). Only pixels inside each box are read. `scores`, if given, receives one
/// entry per proposal.
std::vector<Proposal> relabel_hdm(const std::vector<Proposal>& proposals, const RegionPredictor& region,
                                  const ProbMap& p_img, const Image& img, const LabelMask& gt,
                                  const hardmine::ClassSplit& split, HdmRule rule = HdmRule::RegionBetter,
                                  std::vector<HdmScore>* scores = nullptr);

/// Same, driven by a trained region branch (PreconditionError otherwise).
std::vector<Proposal> relabel_hdm(const std::vector<Proposal>& proposals, const fuse::RegionBranch& region,
                                  const ProbMap& p_img, const Image& img, const LabelMask& gt,
                                  const hardmine::ClassSplit& split, HdmRule rule = HdmRule::RegionBetter,
                                  std::vector<HdmScore>* scores = nullptr);

}  // namespace dlseg::proposals
