#include "dlseg/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dlseg/errors.hpp"
#include "dlseg/kvconfig.hpp"

namespace dlseg::proposals {

BoxF to_boxf(const Box& b) { return {double(b.x), double(b.y), double(b.w), double(b.h)}; }

Box to_pixel_box(const BoxF& b, int img_h, int img_w) {
  const int x0 = static_cast<int>(std::floor(b.x));
  const int y0 = static_cast<int>(std::floor(b.y));
  const int x1 = static_cast<int>(std::ceil(b.x + b.w));
  const int y1 = static_cast<int>(std::ceil(b.y + b.h));
  return clamp_box({x0, y0, x1 - x0, y1 - y0}, img_h, img_w);
}

BoxF clamp(const BoxF& b, int img_h, int img_w) {
  const double x0 = std::clamp(b.x, 0.0, double(img_w));
  const double y0 = std::clamp(b.y, 0.0, double(img_h));
  const double x1 = std::clamp(b.x + b.w, 0.0, double(img_w));
  const double y1 = std::clamp(b.y + b.h, 0.0, double(img_h));
  return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

double iou(const BoxF& a, const BoxF& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

RegressionTarget encode(const BoxF& box, const BoxF& anchor) {
  if (!(box.w > 0 && box.h > 0 && anchor.w > 0 && anchor.h > 0))
    throw ValidationError("box encoding needs positive box and anchor sizes");
  return {(box.cx() - anchor.cx()) / anchor.w, (box.cy() - anchor.cy()) / anchor.h, std::log(box.w / anchor.w),
          std::log(box.h / anchor.h)};
}

BoxF decode(const RegressionTarget& t, const BoxF& anchor) {
  const double w = anchor.w * std::exp(t.dw);
  const double h = anchor.h * std::exp(t.dh);
  const double cx = anchor.cx() + t.x * anchor.w;
  const double cy = anchor.cy() + t.y * anchor.h;
  return {cx - 0.5 * w, cy - 0.5 * h, w, h};
}

double smooth_l1(const RegressionTarget& pred, const RegressionTarget& target, double beta) {
  auto term = [beta](double d) {
    const double a = std::abs(d);
    return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
  };
  return term(pred.x - target.x) + term(pred.y - target.y) + term(pred.dw - target.dw) + term(pred.dh - target.dh);
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold, int keep) {
  std::vector<Proposal> kept;
  if (keep <= 0) return kept;
  std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.box < b.box;
  });
  for (const auto& p : proposals) {
    if (static_cast<int>(kept.size()) >= keep) break;
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou(p.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

double in_box_hard_iou(const LabelMask& pred_region, const LabelMask& gt_region, const Box& box) {
  if (!pred_region.same_shape(gt_region)) throw ValidationError("in-box IoU: mask shapes differ");
  if (!box.inside(gt_region.height, gt_region.width)) throw ValidationError("in-box IoU: box outside image");
  int max_label = 0;
  for (int y = box.y; y < box.bottom(); ++y)
    for (int x = box.x; x < box.right(); ++x) {
      const int g = gt_region.at(y, x);
      if (g != kIgnoreLabel) max_label = std::max(max_label, g);
      const int p = pred_region.at(y, x);
      if (p != kIgnoreLabel) max_label = std::max(max_label, p);
    }
  std::vector<long> tp(static_cast<std::size_t>(max_label) + 1, 0), fp(tp.size(), 0), fn(tp.size(), 0);
  for (int y = box.y; y < box.bottom(); ++y)
    for (int x = box.x; x < box.right(); ++x) {
      const int g = gt_region.at(y, x);
      if (g == kIgnoreLabel) continue;
      const int p = pred_region.at(y, x);
      if (p == g) {
        ++tp[static_cast<std::size_t>(g)];
      } else {
        ++fn[static_cast<std::size_t>(g)];
        if (p != kIgnoreLabel) ++fp[static_cast<std::size_t>(p)];
      }
    }
  double acc = 0.0;
  int n = 0;
  for (std::size_t k = 1; k < tp.size(); ++k) {
    if (tp[k] + fn[k] == 0) continue;  // no ground truth of this hard class in the box
    acc += static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k] + fn[k]);
    ++n;
  }
  return n ? acc / n : 0.0;
}

double in_box_class_iou(const LabelMask& pred, const LabelMask& gt, const Box& box, int cls) {
  if (!pred.same_shape(gt)) throw ValidationError("in-box IoU: mask shapes differ");
  if (!box.inside(gt.height, gt.width)) throw ValidationError("in-box IoU: box outside image");
  long tp = 0, fp = 0, fn = 0;
  for (int y = box.y; y < box.bottom(); ++y)
    for (int x = box.x; x < box.right(); ++x) {
      const int g = gt.at(y, x);
      if (g == kIgnoreLabel) continue;
      const bool pg = pred.at(y, x) == cls;
      const bool gg = g == cls;
      tp += pg && gg;
      fp += pg && !gg;
      fn += !pg && gg;
    }
  const long d = tp + fp + fn;
  return d ? static_cast<double>(tp) / static_cast<double>(d) : std::numeric_limits<double>::quiet_NaN();
}

std::vector<Proposal> make_rdn_labels(const std::vector<hardmine::Instance>& boxes, const ProbMap& p_img,
                                      const LabelMask& gt, double box_threshold) {
  if (p_img.height != gt.height || p_img.width != gt.width)
    throw ValidationError("RDN labels: probability map and ground truth shapes differ");
  const LabelMask pred = p_img.argmax();
  std::vector<Proposal> out;
  out.reserve(boxes.size());
  for (const auto& inst : boxes) {
    if (!inst.box.inside(gt.height, gt.width)) throw ValidationError("RDN labels: instance box outside image");
    double q = in_box_class_iou(pred, gt, inst.box, inst.class_id);
    if (std::isnan(q)) q = 0.0;
    out.push_back({to_boxf(inst.box), 1.0, q < box_threshold ? Label::Positive : Label::Negative});
  }
  return out;
}

std::string label_name(Label l) {
  switch (l) {
    case Label::Positive:
      return "hard";
    case Label::Negative:
      return "easy";
    default:
      return "unlabeled";
  }
}

namespace {

Label parse_label(const std::string& s) {
  if (s == "hard") return Label::Positive;
  if (s == "easy") return Label::Negative;
  if (s == "unlabeled") return Label::Unlabeled;
  throw IoError("unknown proposal label '" + s + "'");
}

}  // namespace

void save_proposals(const ProposalTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write proposals " + path.string());
  out << "image_id\tx\ty\tw\th\tscore\tlabel\n";
  for (const auto& [id, props] : table)
    for (const auto& p : props)
      out << id << '\t' << format_double(p.box.x) << '\t' << format_double(p.box.y) << '\t' << format_double(p.box.w) << '\t'
          << format_double(p.box.h) << '\t' << format_double(p.score) << '\t' << label_name(p.label) << '\n';
}

ProposalTable load_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read proposals " + path.string());
  ProposalTable table;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, label;
    Proposal p;
    if (!(ss >> id >> p.box.x >> p.box.y >> p.box.w >> p.box.h >> p.score >> label))
      throw IoError("malformed proposal record: " + line);
    p.label = parse_label(label);
    table[id].push_back(p);
  }
  return table;
}

}  // namespace dlseg::proposals
