#include "dlseg/segcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dlseg/errors.hpp"
#include "dlseg/optim.hpp"
#include "dlseg/scene_data.hpp"
#include "dlseg/tensor.hpp"

namespace dlseg::seg {

namespace F = torch::nn::functional;

SegModel::SegModel(int class_count, const std::string& arch, int width, std::uint64_t seed)
    : class_count_(class_count), arch_(arch), width_(width) {
  torch::manual_seed(derive_seed(seed, "seg-init"));
  net_ = nets::make_seg_network(arch, class_count, width);
}

SegModel SegModel::for_region(const hardmine::ClassSplit& split, const std::string& arch, int width, std::uint64_t seed) {
  if (split.hard.empty()) throw ConfigError("region model needs at least one hard class; lower the hard-class threshold");
  return SegModel(split.region_class_count(), arch, width, seed);
}

std::vector<int> SegModel::class_space() const {
  std::vector<int> ids(static_cast<std::size_t>(class_count_));
  for (int i = 0; i < class_count_; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

torch::Tensor SegModel::logits(const torch::Tensor& x) const { return net_->forward(x); }

ProbMap SegModel::predict(const Image& img) const {
  torch::NoGradGuard guard;
  auto probs = torch::softmax(logits(to_tensor(img).unsqueeze(0)), 1);
  return to_probmap(probs[0]);
}

void SegModel::write(Checkpoint& ckpt) const {
  ckpt.meta.set("seg.arch", arch_);
  ckpt.meta.set("seg.width", std::to_string(width_));
  ckpt.meta.set("seg.classes", std::to_string(class_count_));
  ckpt.meta.set("trained_steps", std::to_string(trained_steps));
  ckpt.add_module("net.", *net_);
}

SegModel SegModel::read(const Checkpoint& ckpt) {
  SegModel m(static_cast<int>(ckpt.meta.require_int("seg.classes")), ckpt.meta.require_string("seg.arch"),
             static_cast<int>(ckpt.meta.require_int("seg.width")));
  ckpt.load_module("net.", *m.net_);
  m.trained_steps = ckpt.meta.get_int("trained_steps", 0);
  return m;
}

void SegModel::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.kind = "segmenter";
  write(ckpt);
  save_checkpoint(ckpt, path);
}

SegModel SegModel::load(const std::filesystem::path& path) { return read(load_checkpoint(path, "segmenter")); }

SegLoss seg_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 4 || labels.dim() != 3 || logits.size(0) != labels.size(0) || logits.size(2) != labels.size(1) ||
      logits.size(3) != labels.size(2))
    throw ValidationError("seg_loss: logits [N, C, H, W] and labels [N, H, W] disagree in shape");
  const auto valid = labels != static_cast<int64_t>(kIgnoreLabel);
  const auto count = valid.sum().item<int64_t>();
  if (count == 0) return {(logits * 0.0).sum(), true};
  auto logp = torch::log_softmax(logits, 1);
  auto safe = torch::where(valid, labels, torch::zeros_like(labels));
  auto picked = logp.gather(1, safe.unsqueeze(1)).squeeze(1);
  auto loss = -(picked * valid.to(logits.scalar_type())).sum() / static_cast<double>(count);
  return {loss, false};
}

void AugmentConfig::validate() const {
  if (!(scale_min > 0) || !(scale_min < scale_max)) throw ConfigError("augment scale range must satisfy 0 < min < max");
  if (flip_prob < 0 || flip_prob > 1) throw ConfigError("augment flip probability must lie in [0, 1]");
  if (brightness < 0 || contrast < 0 || contrast >= 1) throw ConfigError("augment jitter ranges out of bounds");
  if (crop_height < 8 || crop_width < 8) throw ConfigError("augment crop must be at least 8x8");
}

AugmentConfig AugmentConfig::from_config(const KvConfig& cfg, const std::string& prefix) {
  AugmentConfig a;
  if (cfg.has(prefix + "scale")) {
    auto s = cfg.get_doubles(prefix + "scale", {});
    if (s.size() != 2) throw ConfigError(prefix + "scale needs two values");
    a.scale_min = s[0];
    a.scale_max = s[1];
  }
  a.flip_prob = cfg.get_double(prefix + "flip", a.flip_prob);
  a.brightness = cfg.get_double(prefix + "brightness", a.brightness);
  a.contrast = cfg.get_double(prefix + "contrast", a.contrast);
  if (cfg.has(prefix + "crop")) {
    auto c = cfg.get_ints(prefix + "crop", {});
    if (c.size() != 2) throw ConfigError(prefix + "crop needs height,width");
    a.crop_height = c[0];
    a.crop_width = c[1];
  }
  a.validate();
  return a;
}

void AugmentConfig::write(KvConfig& cfg, const std::string& prefix) const {
  cfg.set(prefix + "scale", format_doubles({scale_min, scale_max}));
  cfg.set(prefix + "flip", format_double(flip_prob));
  cfg.set(prefix + "brightness", format_double(brightness));
  cfg.set(prefix + "contrast", format_double(contrast));
  cfg.set(prefix + "crop", std::to_string(crop_height) + "," + std::to_string(crop_width));
}

double sample_scale(const AugmentConfig& cfg, Rng& rng) { return rng.uniform(cfg.scale_min, cfg.scale_max); }

Image photometric_jitter(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  const double delta = rng.uniform(-cfg.brightness, cfg.brightness);
  const double factor = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  double mean = 0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(1, img.data.size()));
  Image out = img;
  for (auto& v : out.data) v = static_cast<float>(std::clamp((v - mean) * factor + mean + delta, 0.0, 1.0));
  return out;
}

std::pair<Image, LabelMask> augment(const Image& img, const LabelMask& mask, const AugmentConfig& cfg, Rng& rng) {
  if (img.height != mask.height || img.width != mask.width) throw ValidationError("augment: image and mask differ in shape");
  const double s = sample_scale(cfg, rng);
  const int h = std::max(1, static_cast<int>(std::lround(img.height * s)));
  const int w = std::max(1, static_cast<int>(std::lround(img.width * s)));
  Image im = (h == img.height && w == img.width) ? img : resize_bilinear(img, h, w);
  LabelMask lm = (h == mask.height && w == mask.width) ? mask : resize_nearest(mask, h, w);
  if (rng.bernoulli(cfg.flip_prob)) {
    im = flip_horizontal(im);
    lm = flip_horizontal(lm);
  }
  im = photometric_jitter(im, cfg, rng);

  const int ch = cfg.crop_height, cw = cfg.crop_width;
  const int y0 = h > ch ? rng.randint(0, h - ch) : 0;
  const int x0 = w > cw ? rng.randint(0, w - cw) : 0;
  Image out_img(ch, cw, 0.0f);
  LabelMask out_mask(ch, cw, kIgnoreLabel);
  for (int y = 0; y < std::min(ch, h - y0); ++y)
    for (int x = 0; x < std::min(cw, w - x0); ++x) {
      for (int c = 0; c < 3; ++c) out_img.at(y, x, c) = im.at(y0 + y, x0 + x, c);
      out_mask.at(y, x) = lm.at(y0 + y, x0 + x);
    }
  return {std::move(out_img), std::move(out_mask)};
}

ProbMap predict_multiscale(const SegModel& model, const Image& img, std::vector<double> ratios) {
  if (ratios.empty()) throw ConfigError("multi-scale prediction needs at least one ratio");
  std::sort(ratios.begin(), ratios.end());
  std::vector<double> acc(img.pixel_count() * static_cast<std::size_t>(model.class_count()), 0.0);
  for (double r : ratios) {
    if (!(r > 0)) throw ConfigError("multi-scale ratios must be positive");
    const int h = std::max(8, static_cast<int>(std::lround(img.height * r)));
    const int w = std::max(8, static_cast<int>(std::lround(img.width * r)));
    ProbMap p;
    if (h == img.height && w == img.width) {
      p = model.predict(img);
    } else {
      p = resize_bilinear(model.predict(resize_bilinear(img, h, w)), img.height, img.width);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.data[i];
  }
  ProbMap out(img.height, img.width, model.class_count());
  const double n = static_cast<double>(ratios.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] / n);
  return out;
}

void SegTrainConfig::validate() const {
  augment.validate();
  if (steps < 0 || batch < 1 || width < 1) throw ConfigError("segmentation steps must be >= 0, batch and width >= 1");
  if (!(lr > 0) || weight_decay < 0) throw ConfigError("segmentation optimiser settings out of range");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

SegTrainConfig SegTrainConfig::from_config(const KvConfig& cfg, const std::string& prefix) {
  SegTrainConfig c;
  c.arch = cfg.get_string(prefix + "arch", c.arch);
  c.width = static_cast<int>(cfg.get_int(prefix + "width", c.width));
  c.steps = cfg.get_int(prefix + "steps", c.steps);
  c.batch = static_cast<int>(cfg.get_int(prefix + "batch", c.batch));
  c.lr = cfg.get_double(prefix + "lr", c.lr);
  c.weight_decay = cfg.get_double(prefix + "weight_decay", c.weight_decay);
  c.seed = cfg.get_uint64(prefix + "seed", c.seed);
  c.checkpoint_every = cfg.get_int(prefix + "checkpoint_every", c.checkpoint_every);
  c.augment = AugmentConfig::from_config(cfg, prefix + "augment.");
  c.validate();
  return c;
}

void SegTrainConfig::write(KvConfig& cfg, const std::string& prefix) const {
  cfg.set(prefix + "arch", arch);
  cfg.set(prefix + "width", std::to_string(width));
  cfg.set(prefix + "steps", std::to_string(steps));
  cfg.set(prefix + "batch", std::to_string(batch));
  cfg.set(prefix + "lr", format_double(lr));
  cfg.set(prefix + "weight_decay", format_double(weight_decay));
  cfg.set(prefix + "seed", std::to_string(seed));
  cfg.set(prefix + "checkpoint_every", std::to_string(checkpoint_every));
  augment.write(cfg, prefix + "augment.");
}

namespace {

std::string rng_state(Rng& rng) {
  std::ostringstream ss;
  ss << rng.engine();
  return ss.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream ss(state);
  ss >> rng.engine();
  if (!ss) throw IoError("corrupt random state in training checkpoint");
}

void save_training_state(const std::filesystem::path& path, const SegModel& model, const Adam& opt, Rng& rng,
                         const SegTrainConfig& cfg, long step) {
  Checkpoint ckpt;
  ckpt.kind = "segmenter-train";
  model.write(ckpt);
  opt.save(ckpt, "adam.");
  cfg.write(ckpt.meta, "train.");
  ckpt.meta.set("train.step", std::to_string(step));
  ckpt.meta.set("train.rng", rng_state(rng));
  save_checkpoint(ckpt, path);
}

}  // namespace

SegTrainResult train_segmenter(const std::vector<LabeledImage>& data, int class_count, const SegTrainConfig& cfg,
                               const SegTrainOptions& opts) {
  cfg.validate();
  if (data.empty()) throw PreconditionError("segmentation training needs at least one labelled image");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    if (d.image.height != d.labels.height || d.image.width != d.labels.width)
      throw ValidationError("training sample " + std::to_string(i) + ": image and mask differ in shape");
    scene::validate_labels(d.labels, class_count, "training sample " + std::to_string(i));
  }
  if (opts.relam && !opts.relam->trained()) throw PreconditionError("light adaptation passed to segmentation training is untrained");

  std::vector<Image> inputs;
  inputs.reserve(data.size());
  for (const auto& d : data) inputs.push_back(opts.relam ? opts.relam->adapt(d.image) : d.image);

  SegModel model(class_count, cfg.arch, cfg.width, cfg.seed);
  Adam opt(model.network().parameters(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(derive_seed(cfg.seed, "seg-train"));
  long start = 0;
  if (opts.resume_from) {
    auto ckpt = load_checkpoint(*opts.resume_from, "segmenter-train");
    SegTrainConfig saved = SegTrainConfig::from_config(ckpt.meta, "train.");
    KvConfig a, b;
    saved.write(a, "");
    auto expected = cfg;
    expected.steps = saved.steps;
    expected.write(b, "");
    if (a.serialize() != b.serialize()) throw StalenessError("resume checkpoint was written with a different training config");
    ckpt.load_module("net.", model.network());
    opt.load(ckpt, "adam.");
    restore_rng(rng, ckpt.meta.require_string("train.rng"));
    start = ckpt.meta.require_int("train.step");
  }

  std::ofstream log;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log.open(opts.out_dir / "loss.jsonl", start > 0 ? std::ios::app : std::ios::trunc);
  }

  SegTrainResult result{model, {}};
  model.network().train();
  for (long step = start + 1; step <= cfg.steps; ++step) {
    std::vector<Image> imgs;
    std::vector<LabelMask> masks;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<std::size_t>(rng.randint(0, static_cast<int>(data.size()) - 1));
      auto [im, lm] = augment(inputs[idx], data[idx].labels, cfg.augment, rng);
      imgs.push_back(std::move(im));
      masks.push_back(std::move(lm));
    }
    auto x = stack_images(imgs);
    if (opts.on_batch) opts.on_batch(x);
    opt.zero_grad();
    auto loss = seg_loss(model.logits(x), stack_masks(masks));
    loss.loss.backward();
    opt.step();
    const double value = loss.loss.item<double>();
    if (!std::isfinite(value)) throw NumericalError("segmentation loss became non-finite at step " + std::to_string(step));
    result.losses.push_back(value);
    if (log) {
      nlohmann::ordered_json j;
      j["step"] = step;
      j["loss"] = value;
      if (loss.all_ignored) j["all_ignored"] = true;
      log << j.dump() << '\n';
    }
    if (!opts.out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      save_training_state(opts.out_dir / ("step_" + std::to_string(step) + ".ckpt"), model, opt, rng, cfg, step);
  }
  model.network().eval();
  model.trained_steps = cfg.steps;
  result.model = model;
  return result;
}

}  // namespace dlseg::seg
