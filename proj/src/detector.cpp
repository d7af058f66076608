#include "dlseg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "dlseg/checkpoint.hpp"
#include "dlseg/errors.hpp"
#include "dlseg/optim.hpp"
#include "dlseg/tensor.hpp"

namespace dlseg::proposals {

std::vector<BoxF> make_anchors(int feat_h, int feat_w, const AnchorConfig& cfg) {
  std::vector<BoxF> out;
  out.reserve(static_cast<std::size_t>(feat_h) * feat_w * cfg.per_location());
  for (int i = 0; i < feat_h; ++i)
    for (int j = 0; j < feat_w; ++j) {
      const double cx = (j + 0.5) * cfg.stride, cy = (i + 0.5) * cfg.stride;
      for (double s : cfg.scales)
        for (double r : cfg.ratios) {
          const double w = s / std::sqrt(r), h = s * std::sqrt(r);
          out.push_back({cx - 0.5 * w, cy - 0.5 * h, w, h});
        }
    }
  return out;
}

void DetectorConfig::validate() const {
  if (width < 2 || anchors.stride != 8 || anchors.scales.empty() || anchors.ratios.empty())
    throw ConfigError("detector needs width >= 2, stride 8 and non-empty anchor scales/ratios");
  for (double v : anchors.scales)
    if (!(v > 0)) throw ConfigError("anchor scales must be positive");
  for (double v : anchors.ratios)
    if (!(v > 0)) throw ConfigError("anchor ratios must be positive");
  if (!(negative_iou < positive_iou) || positive_iou > 1 || negative_iou < 0) throw ConfigError("anchor IoU thresholds out of order");
  if (steps < 0 || batch < 1 || samples_per_image < 1 || !(lr > 0)) throw ConfigError("detector schedule out of range");
  if (keep < 0 || pre_nms < 1 || nms_threshold <= 0 || nms_threshold > 1) throw ConfigError("proposal settings out of range");
}

DetectorConfig DetectorConfig::from_config(const KvConfig& cfg, const std::string& prefix) {
  DetectorConfig c;
  c.width = static_cast<int>(cfg.get_int(prefix + "width", c.width));
  c.anchors.scales = cfg.get_doubles(prefix + "anchor_scales", c.anchors.scales);
  c.anchors.ratios = cfg.get_doubles(prefix + "anchor_ratios", c.anchors.ratios);
  c.steps = cfg.get_int(prefix + "steps", c.steps);
  c.batch = static_cast<int>(cfg.get_int(prefix + "batch", c.batch));
  c.lr = cfg.get_double(prefix + "lr", c.lr);
  c.positive_iou = cfg.get_double(prefix + "positive_iou", c.positive_iou);
  c.negative_iou = cfg.get_double(prefix + "negative_iou", c.negative_iou);
  c.samples_per_image = static_cast<int>(cfg.get_int(prefix + "samples_per_image", c.samples_per_image));
  c.positive_fraction = cfg.get_double(prefix + "positive_fraction", c.positive_fraction);
  c.beta = cfg.get_double(prefix + "beta", c.beta);
  c.flip_prob = cfg.get_double(prefix + "flip", c.flip_prob);
  c.seed = cfg.get_uint64(prefix + "seed", c.seed);
  c.nms_threshold = cfg.get_double(prefix + "nms_threshold", c.nms_threshold);
  c.keep = static_cast<int>(cfg.get_int(prefix + "keep", c.keep));
  c.pre_nms = static_cast<int>(cfg.get_int(prefix + "pre_nms", c.pre_nms));
  c.min_size = cfg.get_double(prefix + "min_size", c.min_size);
  c.validate();
  return c;
}

void DetectorConfig::write(KvConfig& cfg, const std::string& prefix) const {
  cfg.set(prefix + "width", std::to_string(width));
  cfg.set(prefix + "anchor_scales", format_doubles(anchors.scales));
  cfg.set(prefix + "anchor_ratios", format_doubles(anchors.ratios));
  cfg.set(prefix + "steps", std::to_string(steps));
  cfg.set(prefix + "batch", std::to_string(batch));
  cfg.set(prefix + "lr", format_double(lr));
  cfg.set(prefix + "positive_iou", format_double(positive_iou));
  cfg.set(prefix + "negative_iou", format_double(negative_iou));
  cfg.set(prefix + "samples_per_image", std::to_string(samples_per_image));
  cfg.set(prefix + "positive_fraction", format_double(positive_fraction));
  cfg.set(prefix + "beta", format_double(beta));
  cfg.set(prefix + "flip", format_double(flip_prob));
  cfg.set(prefix + "seed", std::to_string(seed));
  cfg.set(prefix + "nms_threshold", format_double(nms_threshold));
  cfg.set(prefix + "keep", std::to_string(keep));
  cfg.set(prefix + "pre_nms", std::to_string(pre_nms));
  cfg.set(prefix + "min_size", format_double(min_size));
}

AnchorTargets assign_anchors(const std::vector<BoxF>& anchors, const std::vector<BoxF>& positives, const DetectorConfig& cfg,
                             Rng& rng) {
  const auto m = anchors.size();
  std::vector<int> label(m, -1);
  std::vector<int> match(m, -1);
  std::vector<double> best(m, 0.0);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t g = 0; g < positives.size(); ++g) {
      const double v = iou(anchors[a], positives[g]);
      if (v > best[a]) {
        best[a] = v;
        match[a] = static_cast<int>(g);
      }
    }
  for (std::size_t a = 0; a < m; ++a) {
    if (best[a] >= cfg.positive_iou)
      label[a] = 1;
    else if (best[a] <= cfg.negative_iou)
      label[a] = 0;
  }
  // Every positive box claims its best-overlapping anchor(s).
  for (std::size_t g = 0; g < positives.size(); ++g) {
    double top = 0;
    for (std::size_t a = 0; a < m; ++a) top = std::max(top, iou(anchors[a], positives[g]));
    if (top <= 0) continue;
    for (std::size_t a = 0; a < m; ++a)
      if (iou(anchors[a], positives[g]) == top) {
        label[a] = 1;
        match[a] = static_cast<int>(g);
      }
  }

  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < m; ++a) {
    if (label[a] == 1) pos.push_back(a);
    if (label[a] == 0) neg.push_back(a);
  }
  std::shuffle(pos.begin(), pos.end(), rng.engine());
  std::shuffle(neg.begin(), neg.end(), rng.engine());
  const auto max_pos = static_cast<std::size_t>(cfg.samples_per_image * cfg.positive_fraction);
  for (std::size_t i = max_pos; i < pos.size(); ++i) label[pos[i]] = -1;
  const std::size_t kept_pos = std::min(pos.size(), max_pos);
  const std::size_t max_neg = static_cast<std::size_t>(cfg.samples_per_image) - kept_pos;
  for (std::size_t i = max_neg; i < neg.size(); ++i) label[neg[i]] = -1;

  auto labels = torch::empty({static_cast<int64_t>(m)}, torch::kInt64);
  auto targets = torch::zeros({static_cast<int64_t>(m), 4}, torch::kFloat32);
  auto la = labels.accessor<int64_t, 1>();
  auto ta = targets.accessor<float, 2>();
  for (std::size_t a = 0; a < m; ++a) {
    la[static_cast<int64_t>(a)] = label[a];
    if (label[a] == 1) {
      const auto t = encode(positives[static_cast<std::size_t>(match[a])], anchors[a]);
      ta[static_cast<int64_t>(a)][0] = static_cast<float>(t.x);
      ta[static_cast<int64_t>(a)][1] = static_cast<float>(t.y);
      ta[static_cast<int64_t>(a)][2] = static_cast<float>(t.dw);
      ta[static_cast<int64_t>(a)][3] = static_cast<float>(t.dh);
    }
  }
  return {labels, targets};
}

DetectorLoss detector_loss(const torch::Tensor& cls_logits, const torch::Tensor& reg, const torch::Tensor& labels,
                           const torch::Tensor& targets, double beta) {
  if (cls_logits.dim() != 1 || reg.dim() != 2 || reg.size(1) != 4 || labels.sizes() != cls_logits.sizes() ||
      targets.sizes() != reg.sizes() || reg.size(0) != cls_logits.size(0))
    throw ValidationError("detector_loss: expected logits [M], regression [M, 4], labels [M], targets [M, 4]");
  const auto pos = labels == 1;
  const auto sampled = labels >= 0;
  const auto n_pos = pos.sum().item<int64_t>();
  const auto n_sampled = sampled.sum().item<int64_t>();

  auto l_reg = (reg * 0.0).sum();
  if (n_pos > 0) {
    auto d = (reg - targets).abs();
    auto per = torch::where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta).sum(1);
    l_reg = (per * pos.to(per.scalar_type())).sum() / static_cast<double>(n_pos);
  }
  auto l_cls = (cls_logits * 0.0).sum();
  if (n_sampled > 0) {
    auto y = pos.to(cls_logits.scalar_type());
    // Numerically stable BCE with logits.
    auto bce = torch::clamp_min(cls_logits, 0) - cls_logits * y + torch::log1p(torch::exp(-cls_logits.abs()));
    l_cls = (bce * sampled.to(bce.scalar_type())).sum() / static_cast<double>(n_sampled);
  }
  return {l_reg, l_cls, l_reg + l_cls};
}

Detector::Detector(const DetectorConfig& cfg) : config(cfg) {
  config.validate();
  torch::manual_seed(derive_seed(cfg.seed, "detector-init"));
  net = nets::DetectorNet(cfg.anchors.per_location(), cfg.width);
}

void Detector::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.kind = "detector";
  config.write(ckpt.meta, "detector.");
  ckpt.meta.set("trained_steps", std::to_string(trained_steps));
  ckpt.add_module("net.", *net);
  save_checkpoint(ckpt, path);
}

Detector Detector::load(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path, "detector");
  Detector det(DetectorConfig::from_config(ckpt.meta, "detector."));
  ckpt.load_module("net.", *det.net);
  det.trained_steps = ckpt.meta.get_int("trained_steps", 0);
  return det;
}

namespace {

int feature_extent(int pixels) {
  int v = pixels;
  for (int i = 0; i < 3; ++i) v = (v + 1) / 2;  // three stride-2, padding-1, kernel-3 convolutions
  return v;
}

BoxF flip_box(const BoxF& b, int width) { return {width - b.x - b.w, b.y, b.w, b.h}; }

}  // namespace

Detector train_detector(const std::vector<DetectorSample>& data, const DetectorConfig& cfg, const std::filesystem::path& log_path) {
  cfg.validate();
  if (data.empty()) throw PreconditionError("detector training needs at least one image");
  Detector det(cfg);
  Adam opt(det.net->parameters(), {cfg.lr});
  Rng rng(derive_seed(cfg.seed, "detector-train"));
  std::ofstream log;
  if (!log_path.empty()) {
    if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
    log.open(log_path);
  }
  for (long step = 1; step <= cfg.steps; ++step) {
    std::vector<Image> imgs;
    std::vector<torch::Tensor> labels, targets;
    std::vector<BoxF> anchors;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& s = data[static_cast<std::size_t>(rng.randint(0, static_cast<int>(data.size()) - 1))];
      if (!imgs.empty() && (s.image.height != imgs[0].height || s.image.width != imgs[0].width))
        throw ValidationError("detector training images must share one shape");
      const bool flip = rng.bernoulli(cfg.flip_prob);
      std::vector<BoxF> pos;
      for (const auto& p : s.boxes)
        if (p.label == Label::Positive) pos.push_back(flip ? flip_box(p.box, s.image.width) : p.box);
      imgs.push_back(flip ? flip_horizontal(s.image) : s.image);
      if (anchors.empty()) anchors = make_anchors(feature_extent(s.image.height), feature_extent(s.image.width), cfg.anchors);
      auto t = assign_anchors(anchors, pos, cfg, rng);
      labels.push_back(t.labels);
      targets.push_back(t.targets);
    }
    auto [cls, reg] = det.net->forward(stack_images(imgs));
    opt.zero_grad();
    auto loss = detector_loss(cls.reshape({-1}), reg.reshape({-1, 4}), torch::cat(labels), torch::cat(targets), cfg.beta);
    loss.total.backward();
    opt.step();
    const double total = loss.total.item<double>();
    if (!std::isfinite(total)) throw NumericalError("detector loss became non-finite at step " + std::to_string(step));
    if (log) {
      nlohmann::ordered_json j;
      j["step"] = step;
      j["L_reg"] = loss.reg.item<double>();
      j["L_cls"] = loss.cls.item<double>();
      j["L_det"] = total;
      log << j.dump() << '\n';
    }
  }
  det.trained_steps = cfg.steps;
  return det;
}

std::vector<Proposal> propose(const Detector& det, const Image& img, int keep) {
  if (keep <= 0) return {};
  torch::NoGradGuard guard;
  auto [cls, reg] = det.net->forward(to_tensor(img).unsqueeze(0));
  const auto fh = static_cast<int>(cls.size(1)), fw = static_cast<int>(cls.size(2));
  const auto anchors = make_anchors(fh, fw, det.config.anchors);
  auto scores = torch::sigmoid(cls.reshape({-1})).contiguous();
  auto deltas = reg.reshape({-1, 4}).contiguous();
  auto sa = scores.accessor<float, 1>();
  auto da = deltas.accessor<float, 2>();
  std::vector<Proposal> candidates;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto i = static_cast<int64_t>(a);
    RegressionTarget t{da[i][0], da[i][1], std::clamp<double>(da[i][2], -4.0, 4.0), std::clamp<double>(da[i][3], -4.0, 4.0)};
    const BoxF box = clamp(decode(t, anchors[a]), img.height, img.width);
    if (box.w < det.config.min_size || box.h < det.config.min_size) continue;
    candidates.push_back({box, static_cast<double>(sa[i]), Label::Unlabeled});
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.box < b.box;
  });
  if (candidates.size() > static_cast<std::size_t>(det.config.pre_nms)) candidates.resize(static_cast<std::size_t>(det.config.pre_nms));
  return nms(std::move(candidates), det.config.nms_threshold, keep);
}

double recall(const std::vector<std::vector<Proposal>>& proposals, const std::vector<std::vector<BoxF>>& targets,
              double iou_threshold) {
  if (proposals.size() != targets.size()) throw ValidationError("recall: proposal and target lists differ in length");
  long hit = 0, total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (const auto& t : targets[i]) {
      ++total;
      for (const auto& p : proposals[i])
        if (iou(p.box, t) >= iou_threshold) {
          ++hit;
          break;
        }
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : std::nan("");
}

}  // namespace dlseg::proposals
