#pragma once

// Continuous boxes, anchor regression targets, NMS, proposal records and the
// in-box quality measures used to pseudo-label proposals.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dlseg/hardmine.hpp"
#include "dlseg/raster.hpp"

namespace dlseg::proposals {

/// Continuous box; (x, y) top-left, w/h extents in pixels.
struct BoxF {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  auto operator<=>(const BoxF&) const = default;
};

BoxF to_boxf(const Box& b);
/// Smallest pixel box covering `b`, clamped to the image. May be empty.
Box to_pixel_box(const BoxF& b, int img_h, int img_w);
BoxF clamp(const BoxF& b, int img_h, int img_w);

double iou(const BoxF& a, const BoxF& b);

/// (x, y) centre offsets normalised by anchor size, (dw, dh) log size ratios.
struct RegressionTarget {
  double x = 0;
  double y = 0;
  double dw = 0;
  double dh = 0;
};

RegressionTarget encode(const BoxF& box, const BoxF& anchor);
BoxF decode(const RegressionTarget& t, const BoxF& anchor);

/// Sum over the four coordinates of 0.5 d^2 / beta if |d| < beta else |d| - 0.5 beta.
double smooth_l1(const RegressionTarget& pred, const RegressionTarget& target, double beta = 1.0);

enum class Label { Unlabeled = -1, Negative = 0, Positive = 1 };

struct Proposal {
  BoxF box;
  double score = 0.0;
  Label label = Label::Unlabeled;
};

/// Greedy score-descending suppression; ties broken by (x, y, w, h) ascending.
/// A proposal is dropped when its IoU with an already kept one exceeds `iou_threshold`.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold = 0.7, int keep = 10);

/// Mean over hard classes with ground-truth pixels in `box` of the in-box IoU between
/// `pred` and `gt`, both already in the region label space (0 = other, 1..K = hard).
/// Returns 0 when the box holds no hard ground-truth pixel.
double in_box_hard_iou(const LabelMask& pred_region, const LabelMask& gt_region, const Box& box);

/// IoU of (pred == cls) against (gt == cls) restricted to `box`; NaN if neither has the class there.
double in_box_class_iou(const LabelMask& pred, const LabelMask& gt, const Box& box, int cls);

/// RDN pseudo labels: positive (hard) when the image-level prediction's in-box IoU for the
/// instance's class is below `box_threshold`, negative (easy) otherwise.
std::vector<Proposal> make_rdn_labels(const std::vector<hardmine::Instance>& boxes, const ProbMap& p_img,
                                      const LabelMask& gt, double box_threshold = 0.5);

/// Line-delimited records: image_id, x, y, w, h, score, label.
using ProposalTable = std::map<std::string, std::vector<Proposal>>;
void save_proposals(const ProposalTable& table, const std::filesystem::path& path);
ProposalTable load_proposals(const std::filesystem::path& path);

std::string label_name(Label l);

}  // namespace dlseg::proposals
