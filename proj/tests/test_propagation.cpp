#include <gtest/gtest.h>

#include "hvc/metrics.hpp"
#include "hvc/propagation.hpp"
#include "support/oracles.hpp"

using namespace hvc;
using Map = FeatureMap<double>;

namespace {

SoftLabels random_labels(Rng& rng, int classes, int h, int w)
{
  SoftLabels s{classes, h, w, Eigen::MatrixXd(classes, h * w)};
  std::uniform_real_distribution<double> u(0.01, 1);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    s.values.data()[i] = u(rng);
  for (Eigen::Index j = 0; j < s.values.cols(); ++j)
    s.values.col(j) /= s.values.col(j).sum();
  return s;
}

// Frames with one bright square on a dark background.
ImageBuffer square_frame(int size, int sx, int sy, int side)
{
  ImageBuffer img(size, size);
  for (int y = sy; y < sy + side; ++y)
    for (int x = sx; x < sx + side; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = 1.f;
  return img;
}

// Ideal per-pixel features: square pixels carry a one-hot code of their
// offset inside the square, background pixels share one direction plus a
// small position code.
FeatureExtractor ideal_extractor(int side)
{
  return [side](const ImageBuffer& img) {
    int sx = img.width, sy = img.height;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if (img.at(y, x, 0) > 0.5f)
        {
          sx = std::min(sx, x);
          sy = std::min(sy, y);
        }
    const int dims = side * side + 3;
    Map f(1, dims, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
      {
        auto col = f.values.col(y * img.width + x);
        if (img.at(y, x, 0) > 0.5f)
          col((y - sy) * side + (x - sx)) = 1;
        else
        {
          col(side * side) = 1;
          col(side * side + 1) = 0.1 * x / img.width;
          col(side * side + 2) = 0.1 * y / img.height;
          col.normalize();
        }
      }
    return f;
  };
}

LabelImage square_mask(int size, int sx, int sy, int side)
{
  LabelImage m = LabelImage::Zero(size, size);
  m.block(sy, sx, side, side).setConstant(1);
  return m;
}

}  // namespace

TEST(Downsample, UniformMask)
{
  const auto s = downsample_mask(LabelImage::Constant(8, 8, 2), 3, 4, 4);
  for (Eigen::Index j = 0; j < 16; ++j)
    EXPECT_EQ(s.values.col(j), Eigen::Vector3d(0, 0, 1));
}

TEST(Downsample, AlignedSplit)
{
  LabelImage m = LabelImage::Zero(8, 8);
  m.rightCols(4).setConstant(1);
  const auto s = downsample_mask(m, 2, 2, 2);
  for (int a = 0; a < 2; ++a)
  {
    EXPECT_EQ(s.values.col(a * 2), Eigen::Vector2d(1, 0));
    EXPECT_EQ(s.values.col(a * 2 + 1), Eigen::Vector2d(0, 1));
  }
}

TEST(Downsample, MisalignedSplitCountsPixels)
{
  LabelImage m = LabelImage::Zero(8, 8);
  m.rightCols(5).setConstant(1);
  const auto s = downsample_mask(m, 2, 2, 2);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
    {
      int ones = 0;
      for (int y = a * 4; y < a * 4 + 4; ++y)
        for (int x = b * 4; x < b * 4 + 4; ++x)
          ones += m(y, x);
      EXPECT_DOUBLE_EQ(s.values(1, a * 2 + b), ones / 16.0);
      EXPECT_DOUBLE_EQ(s.values(0, a * 2 + b), 1 - ones / 16.0);
    }
  EXPECT_THROW(downsample_mask(m, 1, 2, 2), Error);
}

TEST(Upsample, TiesGoToLowerClass)
{
  SoftLabels s{2, 1, 1, Eigen::MatrixXd::Constant(2, 1, 0.5)};
  EXPECT_EQ(upsample_argmax(s, 3, 3), LabelImage::Zero(3, 3));
}

TEST(Upsample, SameResolutionIsArgmax)
{
  Rng rng(1);
  const auto s = random_labels(rng, 3, 4, 5);
  const auto m = upsample_argmax(s, 4, 5);
  for (int j = 0; j < 20; ++j)
  {
    Eigen::Index best;
    s.values.col(j).maxCoeff(&best);
    EXPECT_EQ(m(j / 5, j % 5), best);
  }
}

TEST(ContextBank, KeepsAnchorAndRecent)
{
  ContextEntry e{Map(1, 1, 1, 1), SoftLabels{1, 1, 1, Eigen::MatrixXd::Ones(1, 1)}};
  ContextBank bank(e, 2);
  for (int i = 0; i < 5; ++i)
  {
    auto x = e;
    x.features.values(0, 0) = i;
    bank.push(x);
  }
  EXPECT_EQ(bank.size(), 3u);
  EXPECT_EQ(bank.recent().front().features.values(0, 0), 3);
  EXPECT_EQ(bank.recent().back().features.values(0, 0), 4);
  EXPECT_EQ(bank.anchor().features.values(0, 0), 0);
}

TEST(PropagateFrame, SelfMatchCopiesLabels)
{
  Map f(1, 9, 3, 3);
  f.values.setIdentity();
  Rng rng(2);
  const auto labels = random_labels(rng, 3, 3, 3);
  PropagationConfig cfg;
  cfg.top_k = 1;
  const auto out = propagate_frame(f, ContextBank({f, labels}, 0), cfg);
  EXPECT_EQ(out.values, labels.values);
}

TEST(PropagateFrame, ColdLimitCopiesBestMatch)
{
  Rng rng(3);
  const Map q = oracle::random_unit_map(rng, 1, 6, 3, 3);
  const Map r = oracle::random_unit_map(rng, 1, 6, 3, 3);
  const auto labels = random_labels(rng, 2, 3, 3);
  PropagationConfig cfg;
  cfg.top_k = 9;
  cfg.temperature = 1e-4;
  const auto out = propagate_frame(q, ContextBank({r, labels}, 0), cfg);
  const Eigen::MatrixXd sims = r.values.transpose() * q.values;
  for (int j = 0; j < 9; ++j)
  {
    Eigen::Index best;
    sims.col(j).maxCoeff(&best);
    EXPECT_LT((out.values.col(j) - labels.values.col(best)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PropagateFrame, MatchesEnumerationTwoReferences)
{
  Rng rng(4);
  const Map q = oracle::random_unit_map(rng, 1, 3, 2, 2);
  const Map r0 = oracle::random_unit_map(rng, 1, 3, 2, 2);
  const Map r1 = oracle::random_unit_map(rng, 1, 3, 2, 2);
  const auto l0 = random_labels(rng, 3, 2, 2), l1 = random_labels(rng, 3, 2, 2);
  ContextBank bank({r0, l0}, 5);
  bank.push({r1, l1});
  PropagationConfig cfg;
  cfg.top_k = 2;
  const auto out = propagate_frame(q, bank, cfg);
  const auto ref = oracle::propagate(q, {r0, r1}, {l0.values, l1.values}, 2, cfg.temperature);
  EXPECT_LT((out.values - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PropagateFrame, FullTopKIsUnrestrictedSoftmax)
{
  Rng rng(5);
  for (int side = 1; side <= 4; ++side)
  {
    const Map q = oracle::random_unit_map(rng, 1, 5, side, side);
    std::vector<Map> refs;
    std::vector<Eigen::MatrixXd> labs;
    ContextBank bank({oracle::random_unit_map(rng, 1, 5, side, side), random_labels(rng, 3, side, side)}, 3);
    refs.push_back(bank.anchor().features);
    labs.push_back(bank.anchor().labels.values);
    for (int i = 0; i < 3; ++i)
    {
      ContextEntry e{oracle::random_unit_map(rng, 1, 5, side, side), random_labels(rng, 3, side, side)};
      refs.push_back(e.features);
      labs.push_back(e.labels.values);
      bank.push(e);
    }
    PropagationConfig cfg;
    cfg.top_k = int(refs.size()) * side * side;
    const auto out = propagate_frame(q, bank, cfg);
    const auto ref = oracle::propagate(q, refs, labs, cfg.top_k, cfg.temperature);
    EXPECT_LT((out.values - ref).cwiseAbs().maxCoeff(), 1e-10) << side;
  }
}

TEST(PropagateFrame, LocalityRestrictsMatches)
{
  // Only the far corner matches the query; with locality it is out of reach.
  Map q(1, 2, 3, 3), r(1, 2, 3, 3);
  q.values.row(0).setOnes();
  r.values.row(1).setOnes();
  r.values.col(8) << 1, 0;
  SoftLabels lab{2, 3, 3, Eigen::MatrixXd::Zero(2, 9)};
  lab.values.row(0).setOnes();
  lab.values.col(8) << 0, 1;
  PropagationConfig cfg;
  cfg.top_k = 1;
  EXPECT_EQ(propagate_frame(q, ContextBank({r, lab}, 0), cfg).values(1, 0), 1.0);
  cfg.locality_radius = 1;
  EXPECT_EQ(propagate_frame(q, ContextBank({r, lab}, 0), cfg).values(1, 0), 0.0);
}

TEST(PropagateFrame, RejectsMismatchedShapes)
{
  const Map q(1, 3, 2, 2);
  ContextBank bank({Map(1, 3, 2, 3), SoftLabels{2, 2, 3, Eigen::MatrixXd::Zero(2, 6)}}, 1);
  EXPECT_THROW(propagate_frame(q, bank, PropagationConfig{}), ShapeMismatch);
}

// Cell-aligned stripes: bilinear upsampling of one-hot cells keeps straight
// edges but rounds convex corners, so boxes would not come back exactly.
LabelImage stripe_mask()
{
  LabelImage first = LabelImage::Zero(64, 64);
  first.middleCols(16, 24).setConstant(1);
  first.rightCols(8).setConstant(2);
  return first;
}

// Static video whose cells are mutually orthogonal: the self-match dominates
// every softmax at the default settings.
TEST(RunVideo, StaticVideoKeepsFirstMask)
{
  const FeatureExtractor codes = [](const ImageBuffer& img) {
    const int h = img.height / 8, w = img.width / 8;
    Map f(1, h * w, h, w);
    f.values.setIdentity();
    return f;
  };
  const std::vector<ImageBuffer> frames(6, ImageBuffer(64, 64));
  const auto first = stripe_mask();
  const auto masks = run_video(codes, frames, first, PropagationConfig{});
  ASSERT_EQ(masks.size(), 6u);
  for (const auto& m : masks)
    EXPECT_EQ(m, first);
}

// A random encoder only guarantees that each cell is its own best match, so
// the static case is exact at top_k = 1. Wider top-k mixes in near-duplicate
// cells; see the README.
TEST(RunVideo, StaticVideoTopOneWithEncoder)
{
  ModelConfig mc;
  mc.backbone_channels = {8, 8, 8};
  mc.projector_hidden = 16;
  mc.out_channels = 16;
  EncoderNet<float> net(mc);
  Rng rng(6);
  net.init(rng);
  ImageBuffer frame(64, 64);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : frame.values)
    v = u(rng);
  const auto first = stripe_mask();
  PropagationConfig cfg;
  cfg.top_k = 1;
  const std::vector<ImageBuffer> frames(6, frame);
  for (double scale : {1.0, 2.0})
  {
    const auto masks = run_video(target_extractor(net, scale), frames, first, cfg);
    for (const auto& m : masks)
      EXPECT_EQ(m, first) << scale;
  }
}

TEST(RunVideo, AllBackgroundStaysBackground)
{
  const std::vector<ImageBuffer> frames{square_frame(16, 2, 2, 4), square_frame(16, 5, 3, 4)};
  const auto masks = run_video(ideal_extractor(4), frames, LabelImage::Zero(16, 16), {});
  for (const auto& m : masks)
    EXPECT_EQ(m, LabelImage::Zero(16, 16));
}

TEST(RunVideo, IdealFeaturesTrackTranslatingSquare)
{
  const int size = 24, side = 6;
  std::vector<ImageBuffer> frames;
  std::vector<LabelImage> truth;
  for (int t = 0; t < 6; ++t)
  {
    frames.push_back(square_frame(size, 2 + 2 * t, 3 + t, side));
    truth.push_back(square_mask(size, 2 + 2 * t, 3 + t, side));
  }
  const auto masks = run_video(ideal_extractor(side), frames, truth.front(), {});
  for (std::size_t t = 0; t < truth.size(); ++t)
  {
    EXPECT_EQ(masks[t], truth[t]) << "frame " << t;
    EXPECT_EQ(jaccard(class_mask(masks[t], 1), class_mask(truth[t], 1)), 1.0);
  }
}
