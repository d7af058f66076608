#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "dlseg/errors.hpp"
#include "dlseg/scene_data.hpp"
#include "dlseg/segcore.hpp"
#include "dlseg/tensor.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace dlseg;
using namespace dlseg::seg;
namespace fs = std::filesystem;

namespace {

// Direct log-sum-exp evaluation, pixel by pixel.
double brute_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  auto l = logits.to(torch::kFloat64).contiguous();
  auto y = labels.contiguous();
  double total = 0;
  long count = 0;
  for (int64_t n = 0; n < l.size(0); ++n)
    for (int64_t i = 0; i < l.size(2); ++i)
      for (int64_t j = 0; j < l.size(3); ++j) {
        const auto t = y[n][i][j].item<int64_t>();
        if (t == kIgnoreLabel) continue;
        double m = -1e300;
        for (int64_t c = 0; c < l.size(1); ++c) m = std::max(m, l[n][c][i][j].item<double>());
        double s = 0;
        for (int64_t c = 0; c < l.size(1); ++c) s += std::exp(l[n][c][i][j].item<double>() - m);
        total += m + std::log(s) - l[n][t][i][j].item<double>();
        ++count;
      }
  return count ? total / count : 0.0;
}

std::vector<LabeledImage> labeled(const std::vector<scene::Sample>& s) {
  std::vector<LabeledImage> out;
  for (const auto& x : s) out.push_back({x.image, x.labels});
  return out;
}

SegTrainConfig quick_config(long steps) {
  SegTrainConfig c;
  c.steps = steps;
  c.batch = 2;
  c.seed = 4;
  c.augment.crop_height = 64;
  c.augment.crop_width = 64;
  return c;
}

AugmentConfig identity_augment(int h, int w) {
  AugmentConfig a;
  a.scale_min = 1.0;
  a.scale_max = 1.0 + 1e-9;
  a.flip_prob = 0.0;
  a.brightness = 0.0;
  a.contrast = 0.0;
  a.crop_height = h;
  a.crop_width = w;
  return a;
}

}  // namespace

TEST(SegLoss, UniformLogitsGiveLogC) {
  auto logits = torch::zeros({1, 8, 5, 7}, torch::kFloat64);
  auto labels = torch::randint(0, 8, {1, 5, 7}, torch::kInt64);
  EXPECT_NEAR(seg_loss(logits, labels).loss.item<double>(), std::log(8.0), 1e-6);
}

TEST(SegLoss, ConfidentCorrectLogitsGiveNearZero) {
  auto labels = torch::randint(0, 4, {2, 6, 6}, torch::kInt64);
  auto logits = torch::full({2, 4, 6, 6}, -20.0, torch::kFloat64);
  logits.scatter_(1, labels.unsqueeze(1), 20.0);
  EXPECT_LT(seg_loss(logits, labels).loss.item<double>(), 1e-6);
}

TEST(SegLoss, AllIgnoreIsZeroWithFlag) {
  auto r = seg_loss(torch::randn({1, 3, 4, 4}), torch::full({1, 4, 4}, 255, torch::kInt64));
  EXPECT_EQ(r.loss.item<double>(), 0.0);
  EXPECT_TRUE(r.all_ignored);
  EXPECT_FALSE(seg_loss(torch::randn({1, 3, 4, 4}), torch::zeros({1, 4, 4}, torch::kInt64)).all_ignored);
}

TEST(SegLoss, MatchesBruteForceCrossEntropy) {
  torch::manual_seed(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = torch::randn({2, 5, 4, 6}, torch::kFloat64) * 3;
    auto labels = torch::randint(0, 5, {2, 4, 6}, torch::kInt64);
    labels.masked_fill_(torch::rand({2, 4, 6}) < 0.2, 255);
    EXPECT_NEAR(seg_loss(logits, labels).loss.item<double>(), brute_cross_entropy(logits, labels), 1e-10);
  }
}

TEST(SegLoss, GradientMatchesFiniteDifferences) {
  torch::manual_seed(12);
  auto labels = torch::randint(0, 3, {1, 4, 4}, torch::kInt64);
  labels[0][1][2] = 255;
  auto logits = torch::randn({1, 3, 4, 4}, torch::kFloat64);
  const double err = oracle::gradient_relative_error([&](const torch::Tensor& l) { return seg_loss(l, labels).loss; }, logits);
  EXPECT_LT(err, 1e-4);
}

TEST(SegLoss, ShapeMismatchIsValidationError) {
  EXPECT_THROW(seg_loss(torch::zeros({1, 3, 4, 4}), torch::zeros({1, 4, 5}, torch::kInt64)), ValidationError);
}

TEST(Augment, ScaleRatiosStayInRange) {
  AugmentConfig cfg;
  Rng rng(1);
  double lo = 10, hi = 0;
  for (int i = 0; i < 1000; ++i) {
    const double s = sample_scale(cfg, rng);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    ASSERT_GT(s, 0.5);
    ASSERT_LT(s, 2.0);
  }
  EXPECT_LT(lo, 0.6);
  EXPECT_GT(hi, 1.9);
}

TEST(Augment, ForcedFlipTwiceIsIdentity) {
  auto s = scene::generate_samples(scene::SceneSpec::defaults(3), 0, 1)[0];
  auto cfg = identity_augment(s.image.height, s.image.width);
  cfg.flip_prob = 1.0;
  Rng rng(2);
  auto [i1, m1] = augment(s.image, s.labels, cfg, rng);
  EXPECT_NE(m1, s.labels);
  auto [i2, m2] = augment(i1, m1, cfg, rng);
  EXPECT_EQ(i2, s.image);
  EXPECT_EQ(m2, s.labels);
}

TEST(Augment, PhotometricJitterLeavesMaskUntouched) {
  auto s = scene::generate_samples(scene::SceneSpec::defaults(4), 0, 1)[0];
  AugmentConfig plain, jittered;
  plain.brightness = 0.0;
  plain.contrast = 0.0;
  jittered.brightness = 0.3;
  jittered.contrast = 0.5;
  for (int seed = 0; seed < 20; ++seed) {
    Rng a(static_cast<std::uint64_t>(seed)), b(static_cast<std::uint64_t>(seed));
    auto [ia, ma] = augment(s.image, s.labels, plain, a);
    auto [ib, mb] = augment(s.image, s.labels, jittered, b);
    EXPECT_EQ(ma, mb);
    for (float v : ib.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Augment, MaskUsesNearestAndStaysAligned) {
  // Blocky mask, image colour encodes the class; interiors must agree after augmentation.
  std::mt19937_64 gen(5);
  auto mask = oracle::random_blocky_mask(gen, 64, 128, 4, 8);
  Image img(64, 128);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.2f * static_cast<float>(mask.at(y, x));
  AugmentConfig cfg;
  cfg.brightness = 0;
  cfg.contrast = 0;
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    auto [im, m] = augment(img, mask, cfg, rng);
    long agree = 0, total = 0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        const int l = m.at(y, x);
        ASSERT_TRUE(l < 4 || l == kIgnoreLabel);
        if (l == kIgnoreLabel) continue;
        ++total;
        agree += std::abs(im.at(y, x, 0) - 0.2f * static_cast<float>(l)) < 1e-3f;
      }
    // Misaligned masks would agree on roughly 1/4 of pixels; edges blur under bilinear resize.
    if (total) EXPECT_GT(static_cast<double>(agree) / total, 0.7);
  }
}

TEST(Augment, DeterministicGivenRngState) {
  auto s = scene::generate_samples(scene::SceneSpec::defaults(6), 0, 1)[0];
  Rng a(9), b(9);
  auto x = augment(s.image, s.labels, AugmentConfig{}, a);
  auto y = augment(s.image, s.labels, AugmentConfig{}, b);
  EXPECT_EQ(x.first, y.first);
  EXPECT_EQ(x.second, y.second);
}

TEST(SegModel, ParameterBudgetAndRegionClassSpace) {
  SegModel m(8);
  const auto n = nets::parameter_count(m.network());
  EXPECT_GT(n, 30000);
  EXPECT_LT(n, 80000);
  EXPECT_EQ(m.downsampling(), 8);
  auto split = hardmine::split_from_hard({6, 7}, 8);
  auto r = SegModel::for_region(split);
  EXPECT_EQ(r.class_space(), (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(SegModel::for_region(hardmine::split_from_hard({}, 8)), ConfigError);
  EXPECT_THROW(SegModel(8, "swin"), ConfigError);
}

TEST(MultiScale, DefaultRatios) { EXPECT_EQ(kDefaultRatios, (std::vector<double>{0.25, 0.5, 0.75, 1.0, 1.25})); }

TEST(MultiScale, SingleUnitRatioEqualsSingleScale) {
  SegModel m(8, "toy", 16, 3);
  auto s = scene::generate_samples(scene::SceneSpec::defaults(2), 0, 1)[0];
  EXPECT_EQ(predict_multiscale(m, s.image, {1.0}).data, m.predict(s.image).data);
}

TEST(MultiScale, AveragesStayOnSimplexAndIgnoreRatioOrder) {
  SegModel m(8, "toy", 16, 4);
  auto samples = scene::generate_samples(scene::SceneSpec::defaults(3), 0, 50);
  std::mt19937_64 rng(7);
  for (const auto& s : samples) {
    auto small = resize_bilinear(s.image, 32, 64);
    auto p = predict_multiscale(m, small);
    ASSERT_EQ(p.height, 32);
    ASSERT_EQ(p.channels, 8);
    ASSERT_GE(p.simplex_error(), 0.0);
    ASSERT_LT(p.simplex_error(), 1e-5);
    auto ratios = kDefaultRatios;
    std::shuffle(ratios.begin(), ratios.end(), rng);
    ASSERT_EQ(predict_multiscale(m, small, ratios).data, p.data);
  }
}

TEST(TrainSegmenter, LossDropsBelowUniformIn200Steps) {
  auto data = labeled(scene::generate_samples(scene::SceneSpec::defaults(5), 0, 8));
  auto result = train_segmenter(data, 8, quick_config(200));
  ASSERT_EQ(result.losses.size(), 200u);
  double tail = 0;
  for (std::size_t i = 180; i < 200; ++i) tail += result.losses[i];
  EXPECT_LT(tail / 20, std::log(8.0));
  EXPECT_TRUE(result.model.trained());
}

TEST(TrainSegmenter, OutOfSpaceLabelIsValidationError) {
  auto data = labeled(scene::generate_samples(scene::SceneSpec::defaults(5), 0, 2));
  EXPECT_THROW(train_segmenter(data, 7, quick_config(1)), ValidationError);
}

TEST(TrainSegmenter, ConsumesAdaptedImages) {
  auto data = labeled(scene::generate_samples(scene::SceneSpec::defaults(6), 0, 3));
  relam::RelamConfig rc;
  rc.width = 4;
  rc.blocks = 1;
  relam::RelamNets relam(rc);
  {
    torch::NoGradGuard guard;
    for (auto& p : relam.generator->named_parameters())
      if (p.key() == "out.bias") p.value().fill_(0.3);
  }
  relam.trained_steps = 1;
  std::vector<Image> adapted;
  for (const auto& d : data) adapted.push_back(relam.adapt(d.image));
  ASSERT_NE(adapted[0], data[0].image);

  auto cfg = quick_config(5);
  cfg.batch = 1;
  cfg.augment = identity_augment(64, 128);
  int seen = 0;
  SegTrainOptions opts;
  opts.relam = &relam;
  opts.on_batch = [&](const torch::Tensor& x) {
    auto img = to_image(x[0]);
    ++seen;
    EXPECT_TRUE(std::find(adapted.begin(), adapted.end(), img) != adapted.end()) << "batch " << seen;
    for (const auto& d : data) EXPECT_NE(img, d.image);
  };
  train_segmenter(data, 8, cfg, opts);
  EXPECT_EQ(seen, 5);

  relam::RelamNets untrained(rc);
  opts.relam = &untrained;
  EXPECT_THROW(train_segmenter(data, 8, cfg, opts), PreconditionError);
}

TEST(TrainSegmenter, ResumeReproducesSubsequentLosses) {
  auto data = labeled(scene::generate_samples(scene::SceneSpec::defaults(7), 0, 4));
  const auto dir = fs::temp_directory_path() / "dlseg_seg_resume";
  fs::remove_all(dir);
  auto cfg = quick_config(20);
  cfg.checkpoint_every = 10;
  auto full = train_segmenter(data, 8, cfg, {dir});
  ASSERT_TRUE(fs::exists(dir / "step_10.ckpt"));
  SegTrainOptions resume;
  resume.resume_from = dir / "step_10.ckpt";
  auto tail = train_segmenter(data, 8, cfg, resume);
  ASSERT_EQ(tail.losses.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(tail.losses[i], full.losses[10 + i]) << "step " << 11 + i;

  auto other = cfg;
  other.lr = 1e-2;
  EXPECT_THROW(train_segmenter(data, 8, other, resume), StalenessError);
}

TEST(SegModel, CheckpointRoundTrip) {
  auto data = labeled(scene::generate_samples(scene::SceneSpec::defaults(8), 0, 2));
  auto model = train_segmenter(data, 8, quick_config(3)).model;
  const auto path = fs::temp_directory_path() / "dlseg_seg.ckpt";
  model.save(path);
  auto back = SegModel::load(path);
  EXPECT_EQ(back.class_count(), 8);
  EXPECT_EQ(back.trained_steps, 3);
  EXPECT_EQ(back.predict(data[0].image).data, model.predict(data[0].image).data);
}
