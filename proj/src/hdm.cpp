#include "dlseg/hdm.hpp"

#include "dlseg/errors.hpp"

namespace dlseg::proposals {

HdmRule parse_hdm_rule(const std::string& s) {
  if (s == "region_better") return HdmRule::RegionBetter;
  if (s == "image_better") return HdmRule::ImageBetter;
  throw ConfigError("unknown hdm rule '" + s + "' (region_better | image_better)");
}

std::string hdm_rule_name(HdmRule r) { return r == HdmRule::RegionBetter ? "region_better" : "image_better"; }

Label hdm_label(double region_iou, double image_iou, HdmRule rule) {
  const bool positive = rule == HdmRule::RegionBetter ? region_iou > image_iou : image_iou > region_iou;
  return positive ? Label::Positive : Label::Negative;
}

std::vector<Proposal> relabel_hdm(const std::vector<Proposal>& proposals, const RegionPredictor& region, const ProbMap& p_img,
                                  const Image& img, const LabelMask& gt, const hardmine::ClassSplit& split, HdmRule rule,
                                  std::vector<HdmScore>* scores) {
  if (p_img.height != gt.height || p_img.width != gt.width || img.height != gt.height || img.width != gt.width)
    throw ValidationError("relabel_hdm: image, probabilities and ground truth differ in shape");
  if (p_img.channels != split.class_count()) throw ValidationError("relabel_hdm: probability channels do not match the class split");
  std::vector<Proposal> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    Proposal q = p;
    HdmScore s;
    const Box box = to_pixel_box(p.box, gt.height, gt.width);
    if (box.w > 0 && box.h > 0) {
      const Box local{0, 0, box.w, box.h};
      const LabelMask g = hardmine::remap_to_region(crop(gt, box), split);
      const LabelMask pi = hardmine::remap_to_region(crop(p_img, box).argmax(), split);
      const ProbMap pr = region(img, box);
      if (pr.height != box.h || pr.width != box.w || pr.channels != split.region_class_count())
        throw ValidationError("relabel_hdm: region prediction does not match its box");
      s.region_iou = in_box_hard_iou(pr.argmax(), g, local);
      s.image_iou = in_box_hard_iou(pi, g, local);
    }
    q.label = hdm_label(s.region_iou, s.image_iou, rule);
    if (scores) scores->push_back(s);
    out.push_back(q);
  }
  return out;
}

std::vector<Proposal> relabel_hdm(const std::vector<Proposal>& proposals, const fuse::RegionBranch& region, const ProbMap& p_img,
                                  const Image& img, const LabelMask& gt, const hardmine::ClassSplit& split, HdmRule rule,
                                  std::vector<HdmScore>* scores) {
  region.require_trained();
  if (region.seg->class_count() != split.region_class_count())
    throw ConfigError("region model class space does not match the class split");
  return relabel_hdm(
      proposals, [&](const Image& im, const Box& b) { return region.predict_box(im, b); }, p_img, img, gt, split, rule, scores);
}

}  // namespace dlseg::proposals
