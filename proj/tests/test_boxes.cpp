#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dlseg/boxes.hpp"
#include "dlseg/errors.hpp"
#include "oracles.hpp"

using namespace dlseg;
using namespace dlseg::proposals;

namespace {

ProbMap one_hot(const LabelMask& m, int C, float confidence = 1.0f) {
  ProbMap p(m.height, m.width, C, (1.0f - confidence) / static_cast<float>(C - 1));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) p.at(y, x, m.at(y, x)) = confidence;
  return p;
}

std::vector<Proposal> random_proposals(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> pos(0, 50), size(2, 20), score(0, 1);
  std::vector<Proposal> out;
  for (int i = 0; i < n; ++i) {
    // Quantised scores force tie-breaking to matter.
    out.push_back({{pos(rng), pos(rng), size(rng), size(rng)}, std::round(score(rng) * 8) / 8, Label::Unlabeled});
  }
  return out;
}

}  // namespace

TEST(Boxes, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> pos(-20, 100), size(0.5, 60);
  for (int i = 0; i < 1000; ++i) {
    BoxF box{pos(rng), pos(rng), size(rng), size(rng)};
    BoxF anchor{pos(rng), pos(rng), size(rng), size(rng)};
    BoxF back = decode(encode(box, anchor), anchor);
    ASSERT_NEAR(back.x, box.x, 1e-6);
    ASSERT_NEAR(back.y, box.y, 1e-6);
    ASSERT_NEAR(back.w, box.w, 1e-6);
    ASSERT_NEAR(back.h, box.h, 1e-6);
  }
}

TEST(Boxes, EncodeRejectsDegenerateSizes) {
  EXPECT_THROW(encode({0, 0, 0, 4}, {0, 0, 4, 4}), ValidationError);
}

TEST(Boxes, SmoothL1ClosedForms) {
  RegressionTarget zero{};
  EXPECT_DOUBLE_EQ(smooth_l1(zero, zero, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1({0.5, 0, 0, 0}, zero, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1({2.0, 0, 0, 0}, zero, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1({0, -2.0, 0.5, 0}, zero, 1.0), 1.625);
}

TEST(Boxes, IouBasics) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 4, 4}, {0, 0, 4, 4}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 4, 4}, {2, 0, 4, 4}), 8.0 / 24.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 4, 4}, {4, 0, 4, 4}), 0.0);
}

TEST(Nms, SingleProposalSurvives) {
  std::vector<Proposal> in{{{1, 2, 3, 4}, 0.3, Label::Unlabeled}};
  auto out = nms(in, 0.7, 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, in[0].box);
}

TEST(Nms, IdenticalBoxesKeepHigherScore) {
  std::vector<Proposal> in{{{1, 1, 5, 5}, 0.8, Label::Unlabeled}, {{1, 1, 5, 5}, 0.9, Label::Unlabeled}};
  auto out = nms(in, 0.7, 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
}

TEST(Nms, KeepZeroIsEmpty) {
  std::mt19937_64 rng(1);
  EXPECT_TRUE(nms(random_proposals(rng, 5), 0.7, 0).empty());
}

TEST(Nms, MatchesBruteForceOracleAndInvariants) {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_proposals(rng, 15);
    const double thr = trial % 2 ? 0.7 : 0.3;
    auto out = nms(in, thr, 10);
    auto want = oracle::brute_nms(in, thr, 10);
    ASSERT_EQ(out.size(), want.size());
    ASSERT_LE(out.size(), 10u);
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_EQ(out[i].box, want[i].box);
      ASSERT_EQ(out[i].score, want[i].score);
      if (i) ASSERT_LE(out[i].score, out[i - 1].score);
      for (std::size_t j = 0; j < i; ++j) ASSERT_LE(iou(out[i].box, out[j].box), thr);
      ASSERT_NE(std::find_if(in.begin(), in.end(), [&](const Proposal& p) { return p.box == out[i].box; }), in.end());
    }
  }
}

TEST(Nms, DeterministicUnderInputPermutation) {
  std::mt19937_64 rng(5);
  auto in = random_proposals(rng, 15);
  auto base = nms(in, 0.5, 10);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(in.begin(), in.end(), rng);
    auto out = nms(in, 0.5, 10);
    ASSERT_EQ(out.size(), base.size());
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i].box, base[i].box);
  }
}

TEST(RdnLabels, PerfectPredictionIsEasy) {
  LabelMask gt(16, 16, 0);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) gt.at(y, x) = 2;
  auto labels = make_rdn_labels({{2, {2, 2, 8, 8}, 16}}, one_hot(gt, 3), gt, 0.5);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].label, Label::Negative);
}

TEST(RdnLabels, MissedClassIsHard) {
  LabelMask gt(16, 16, 0);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) gt.at(y, x) = 2;
  auto labels = make_rdn_labels({{2, {2, 2, 8, 8}, 16}}, one_hot(LabelMask(16, 16, 0), 3), gt, 0.5);
  EXPECT_EQ(labels[0].label, Label::Positive);
}

TEST(RdnLabels, ConstructedInBoxIouBelowThreshold) {
  // 8x8 box: gt class 1 covers 20 pixels, prediction covers 8 of them and nothing else.
  LabelMask gt(12, 12, 0), pred(12, 12, 0);
  const Box box{2, 2, 8, 8};
  int placed = 0;
  for (int y = box.y; y < box.bottom() && placed < 20; ++y)
    for (int x = box.x; x < box.right() && placed < 20; ++x, ++placed) {
      gt.at(y, x) = 1;
      if (placed < 8) pred.at(y, x) = 1;
    }
  const double brute = oracle::brute_iou({crop(pred, box)}, {crop(gt, box)}, 2)[1];
  EXPECT_DOUBLE_EQ(brute, 0.4);
  EXPECT_DOUBLE_EQ(in_box_class_iou(pred, gt, box, 1), 0.4);
  auto labels = make_rdn_labels({{1, box, 20}}, one_hot(pred, 2), gt, 0.5);
  EXPECT_EQ(labels[0].label, Label::Positive);
  labels = make_rdn_labels({{1, box, 20}}, one_hot(pred, 2), gt, 0.4);
  EXPECT_EQ(labels[0].label, Label::Negative);
}

TEST(RdnLabels, BoxOutsideImageIsValidationError) {
  LabelMask gt(8, 8, 0);
  EXPECT_THROW(make_rdn_labels({{1, {6, 6, 4, 4}, 1}}, one_hot(gt, 2), gt), ValidationError);
}

TEST(InBoxHardIou, NoHardGroundTruthScoresZero) {
  LabelMask gt(8, 8, 0), pred(8, 8, 1);
  EXPECT_DOUBLE_EQ(in_box_hard_iou(pred, gt, {0, 0, 8, 8}), 0.0);
  EXPECT_DOUBLE_EQ(in_box_hard_iou(gt, gt, {0, 0, 8, 8}), 0.0);
}

TEST(InBoxHardIou, AveragesPresentHardClasses) {
  LabelMask gt(4, 4, 0), pred(4, 4, 0);
  gt.at(0, 0) = 1;
  gt.at(0, 1) = 1;
  pred.at(0, 0) = 1;  // class 1: 1/2
  gt.at(3, 3) = 2;
  pred.at(3, 3) = 2;  // class 2: 1/1
  EXPECT_DOUBLE_EQ(in_box_hard_iou(pred, gt, {0, 0, 4, 4}), 0.75);
}

TEST(ProposalFile, RoundTrip) {
  ProposalTable t;
  t["000001"] = {{{1.25, 2.5, 10, 3.75}, 0.875, Label::Positive}, {{0, 0, 1, 1}, 0.1, Label::Negative}};
  t["000002"] = {{{1.0 / 3.0, 2, 3, 4}, 0.5, Label::Unlabeled}};
  auto path = std::filesystem::temp_directory_path() / "dlseg_props.tsv";
  save_proposals(t, path);
  auto back = load_proposals(path);
  ASSERT_EQ(back.size(), 2u);
  ASSERT_EQ(back["000001"].size(), 2u);
  EXPECT_EQ(back["000001"][0].box, t["000001"][0].box);
  EXPECT_EQ(back["000001"][0].label, Label::Positive);
  EXPECT_EQ(back["000002"][0].box, t["000002"][0].box);
  EXPECT_EQ(back["000002"][0].label, Label::Unlabeled);
}
