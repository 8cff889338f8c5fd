#include <gtest/gtest.h>

#include "hvc/geometry.hpp"
#include "support/oracles.hpp"

using namespace hvc;

TEST(CropPair, UnitScaleGivesFullImage)
{
  CropConfig cfg;
  cfg.scale_min = cfg.scale_max = 1.0;
  for (std::uint64_t seed : {0u, 1u, 2u, 99u})
  {
    Rng rng(seed);
    const auto [a, b] = sample_crop_pair(64, 64, rng, cfg);
    const CropSpec full{0, 0, 64, 64, cfg.view_size, cfg.view_size};
    EXPECT_EQ(a, full);
    EXPECT_EQ(b, full);
    EXPECT_DOUBLE_EQ(crop_iou(a, b), 1.0);
  }
}

TEST(CropPair, OverlapMatchesPixelCount)
{
  CropConfig cfg;
  Rng rng(7);
  for (int i = 0; i < 50; ++i)
  {
    const auto [a, b] = sample_crop_pair(64, 64, rng, cfg);
    const double raster = oracle::raster_iou(a, b, 64, 64);
    EXPECT_GE(raster, cfg.min_overlap);
    EXPECT_NEAR(crop_iou(a, b), raster, 1e-12);
    for (const auto& c : {a, b})
    {
      EXPECT_GE(c.x0, 0);
      EXPECT_GE(c.y0, 0);
      EXPECT_LE(c.x1, 64);
      EXPECT_LE(c.y1, 64);
      EXPECT_LT(c.x0, c.x1);
      EXPECT_LT(c.y0, c.y1);
    }
  }
}

TEST(CropPair, DisjointProposalsExhaustRetries)
{
  CropConfig cfg;
  cfg.min_overlap = 0.5;
  Rng rng(0);
  int calls = 0;
  const CropProposal disjoint = [&](Rng&) {
    ++calls;
    return std::pair{CropSpec{0, 0, 20, 20}, CropSpec{40, 40, 64, 64}};
  };
  EXPECT_THROW(sample_crop_pair(64, 64, rng, cfg, disjoint), RetriesExhausted);
  EXPECT_EQ(calls, cfg.max_retries);
}

TEST(CropPair, RejectsSmallImages)
{
  Rng rng(0);
  EXPECT_THROW(sample_crop_pair(16, 64, rng, CropConfig{}), ShapeMismatch);
}

TEST(CropPair, SameSeedSameCrops)
{
  CropConfig cfg;
  Rng a(123), b(123);
  for (int i = 0; i < 20; ++i)
    EXPECT_EQ(sample_crop_pair(80, 64, a, cfg), sample_crop_pair(80, 64, b, cfg));
}

TEST(WarpCoords, FullCropCellCentres)
{
  const auto g = warp_coords({0, 0, 64, 64}, 2, 2, 64, 64);
  for (int a = 0; a < 2; ++a)
  {
    EXPECT_DOUBLE_EQ(g.xs(a, 0), 0.25);
    EXPECT_DOUBLE_EQ(g.xs(a, 1), 0.75);
    EXPECT_DOUBLE_EQ(g.ys(0, a), 0.25);
    EXPECT_DOUBLE_EQ(g.ys(1, a), 0.75);
  }
}

TEST(WarpCoords, LeftHalf)
{
  const auto g = warp_coords({0, 0, 32, 64}, 2, 2, 64, 64);
  for (int a = 0; a < 2; ++a)
  {
    EXPECT_DOUBLE_EQ(g.xs(a, 0), 0.125);
    EXPECT_DOUBLE_EQ(g.xs(a, 1), 0.375);
  }
}

TEST(WarpCoords, StrictlyIncreasingInsideUnitSquare)
{
  Rng rng(3);
  CropConfig cfg;
  for (int i = 0; i < 20; ++i)
  {
    const auto c = random_resized_crop(48, 80, rng, cfg);
    const auto g = warp_coords(c, 8, 8, 48, 80);
    EXPECT_GE(g.xs.minCoeff(), 0.0);
    EXPECT_LE(g.xs.maxCoeff(), 1.0);
    EXPECT_GE(g.ys.minCoeff(), 0.0);
    EXPECT_LE(g.ys.maxCoeff(), 1.0);
    for (int a = 0; a < 8; ++a)
      for (int b = 1; b < 8; ++b)
      {
        EXPECT_LT(g.xs(a, b - 1), g.xs(a, b));
        EXPECT_LT(g.ys(b - 1, a), g.ys(b, a));
      }
    EXPECT_EQ(distance_matrix(g, g).diagonal().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(WarpCoords, RejectsEmptyGrid)
{
  EXPECT_THROW(warp_coords({0, 0, 8, 8}, 0, 2, 8, 8), ShapeMismatch);
}

TEST(DistanceMatrix, ThreeFourFive)
{
  GridCoords a{Eigen::MatrixXd::Constant(1, 1, 0.0), Eigen::MatrixXd::Constant(1, 1, 0.0)};
  GridCoords b{Eigen::MatrixXd::Constant(1, 1, 0.3), Eigen::MatrixXd::Constant(1, 1, 0.4)};
  EXPECT_NEAR(distance_matrix(a, b)(0, 0), 0.5, 1e-15);
}

TEST(DistanceMatrix, SwapIsTranspose)
{
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  GridCoords a{Eigen::MatrixXd(3, 4), Eigen::MatrixXd(3, 4)};
  GridCoords b = a;
  for (auto* m : {&a.xs, &a.ys, &b.xs, &b.ys})
    for (Eigen::Index i = 0; i < m->size(); ++i)
      m->data()[i] = u(rng);
  const auto d = distance_matrix(a, b);
  EXPECT_EQ(d, distance_matrix(b, a).transpose());
  EXPECT_EQ(distance_matrix(a, a).diagonal().maxCoeff(), 0.0);
  GridCoords c{Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2)};
  EXPECT_THROW(distance_matrix(a, c), ShapeMismatch);
}

TEST(PositiveMask, BoundaryIsInclusive)
{
  Eigen::MatrixXd d(1, 3);
  d << 0.0, 0.25, 0.2500001;
  const auto m = positive_mask(d, 0.25);
  EXPECT_EQ(m.values(0, 0), 1.0);
  EXPECT_EQ(m.values(0, 1), 1.0);
  EXPECT_EQ(m.values(0, 2), 0.0);
  EXPECT_EQ(m.popcount, 2);
}

TEST(PositiveMask, AllFarIsEmpty)
{
  const auto m = positive_mask(Eigen::MatrixXd::Constant(4, 4, 0.5), 0.1);
  EXPECT_EQ(m.popcount, 0);
  EXPECT_EQ(m.values.sum(), 0.0);
  EXPECT_THROW(positive_mask(Eigen::MatrixXd::Zero(1, 1), 0.0), Error);
}

TEST(ResizeCrop, IdentityCropKeepsPixels)
{
  ImageBuffer img(8, 8);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = float(i % 7) / 7.f;
  const auto out = resize_crop(img, {0, 0, 8, 8, 8, 8});
  EXPECT_EQ(out.values, img.values);
}
