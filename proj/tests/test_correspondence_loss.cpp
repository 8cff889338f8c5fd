#include <gtest/gtest.h>

#include "hvc/correspondence_loss.hpp"
#include "support/oracles.hpp"

using namespace hvc;
using Map = FeatureMap<double>;

namespace {

Eigen::MatrixXd random_mask(Rng& rng, int n, double p)
{
  std::bernoulli_distribution bit(p);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    a.data()[i] = bit(rng) ? 1.0 : 0.0;
  return a;
}

PositiveMask as_mask(const Eigen::MatrixXd& a)
{
  return {a, 0.1, long(a.sum())};
}

}  // namespace

TEST(Similarity, OneHotIsIdentityPattern)
{
  Map f(1, 4, 2, 2);
  f.values.setIdentity();
  const auto s = similarity_matrix(f, f);
  EXPECT_EQ(s, Eigen::MatrixXd::Identity(4, 4));
}

TEST(Similarity, OrthogonalVectorsGiveZero)
{
  Map a(1, 2, 1, 2), b(1, 2, 1, 2);
  a.values << 1, 1, 0, 0;
  b.values << 0, 0, 1, 1;
  EXPECT_EQ(similarity_matrix(a, b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Similarity, MatchesDoubleLoop)
{
  Rng rng(1);
  const Map a = oracle::random_map(rng, 2, 3, 2, 2);
  const Map b = oracle::random_map(rng, 2, 3, 2, 2);
  for (int s = 0; s < 2; ++s)
  {
    const auto m = similarity_matrix(a, b, s);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        EXPECT_NEAR(m(i, j), oracle::dot(oracle::location(a, s, i), oracle::location(b, s, j)),
                    1e-14);
  }
}

TEST(MaskedMean, AllOnes)
{
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 0) = a(1, 2) = a(2, 1) = 1;
  EXPECT_NEAR(masked_mean(Eigen::MatrixXd::Ones(3, 3).eval(), a), 3.0 / (3.0 + 1e-6), 1e-15);
}

TEST(MaskedMean, EmptyMaskIsZero)
{
  EXPECT_EQ(masked_mean(Eigen::MatrixXd::Ones(3, 3).eval(), Eigen::MatrixXd::Zero(3, 3)), 0.0);
}

TEST(MaskedMean, MatchesDoubleLoop)
{
  Rng rng(2);
  for (int i = 0; i < 25; ++i)
  {
    const int n = 1 + int(rng() % 9);
    const Eigen::MatrixXd t = Eigen::MatrixXd::Random(n, n);
    const auto a = random_mask(rng, n, 0.3);
    EXPECT_NEAR(masked_mean(t, a), oracle::masked_mean(t, a), 1e-12);
  }
}

TEST(HybridLoss, IdenticalFullMaskIsMinusTwo)
{
  Rng rng(3);
  const Map f = oracle::random_unit_map(rng, 2, 4, 1, 1);
  const Map m = oracle::random_map(rng, 2, 2, 1, 1);
  const std::vector<PositiveMask> masks(2, as_mask(Eigen::MatrixXd::Ones(1, 1)));
  const auto v = hybrid_loss(f, f, m, m, masks, 1.0);
  EXPECT_NEAR(v.total, -2.0, 1e-5);
  EXPECT_NEAR(v.static_term, 1.0, 1e-5);
  EXPECT_NEAR(v.dynamic_term, 1.0, 1e-5);
}

TEST(HybridLoss, EmptyMaskIsZero)
{
  Rng rng(4);
  const Map f1 = oracle::random_unit_map(rng, 1, 4, 2, 2);
  const Map f2 = oracle::random_unit_map(rng, 1, 4, 2, 2);
  const Map m1 = oracle::random_map(rng, 1, 2, 2, 2);
  const Map m2 = oracle::random_map(rng, 1, 2, 2, 2);
  const auto v = hybrid_loss(f1, f2, m1, m2, {as_mask(Eigen::MatrixXd::Zero(4, 4))}, 1.0);
  EXPECT_EQ(v.total, 0.0);
}

TEST(HybridLoss, MatchesScalarReimplementation)
{
  Rng rng(5);
  for (double alpha : {0.0, 0.5, 1.0, 2.0})
  {
    const Map f1 = oracle::random_unit_map(rng, 1, 3, 2, 2);
    const Map f2 = oracle::random_unit_map(rng, 1, 3, 2, 2);
    const Map m1 = oracle::random_map(rng, 1, 2, 2, 2);
    const Map m2 = oracle::random_map(rng, 1, 2, 2, 2);
    const auto a = random_mask(rng, 4, 0.5);
    const auto v = hybrid_loss(f1, f2, m1, m2, {as_mask(a)}, alpha);
    EXPECT_NEAR(v.total, oracle::hybrid_loss(f1, f2, m1, m2, a, alpha), 1e-12);
  }
}

TEST(HybridLoss, Bounded)
{
  Rng rng(6);
  for (int i = 0; i < 50; ++i)
  {
    const double alpha = std::uniform_real_distribution<double>(0, 2)(rng);
    const Map f1 = oracle::random_unit_map(rng, 2, 4, 3, 3);
    const Map f2 = oracle::random_unit_map(rng, 2, 4, 3, 3);
    const Map m1 = oracle::random_map(rng, 2, 2, 3, 3);
    const Map m2 = oracle::random_map(rng, 2, 2, 3, 3);
    const std::vector<PositiveMask> masks{as_mask(random_mask(rng, 9, 0.4)),
                                          as_mask(random_mask(rng, 9, 0.4))};
    const double t = hybrid_loss(f1, f2, m1, m2, masks, alpha).total;
    EXPECT_LE(std::abs(t), 1 + alpha);
  }
}

TEST(HybridLoss, ShapeErrors)
{
  const Map f(1, 4, 2, 2), m(1, 2, 2, 2);
  EXPECT_THROW(hybrid_loss(f, Map(1, 4, 2, 3), m, m, {as_mask(Eigen::MatrixXd::Ones(4, 4))}, 1.0),
               ShapeMismatch);
  EXPECT_THROW(hybrid_loss(f, f, m, m, {}, 1.0), ShapeMismatch);
  EXPECT_THROW(hybrid_loss(f, f, m, m, {as_mask(Eigen::MatrixXd::Ones(3, 3))}, 1.0),
               ShapeMismatch);
}

TEST(SymmetricLoss, IdenticalViewsIsMinusFour)
{
  PseudoDynamicNet<double> pseudo(4, 3);
  Rng rng(7);
  pseudo.init(rng);
  const Map f = oracle::random_unit_map(rng, 1, 4, 1, 1);
  const std::vector<PositiveMask> masks{as_mask(Eigen::MatrixXd::Ones(1, 1))};
  const auto v = symmetric_step_loss(pseudo, f, f, f, f, masks, masks, 1.0, BnMode::eval);
  EXPECT_NEAR(v.total, -4.0, 1e-5);
}

TEST(SymmetricLoss, SwappingViewsKeepsTotal)
{
  PseudoDynamicNet<double> pseudo(4, 3);
  Rng rng(8);
  pseudo.init(rng);
  const Map o1 = oracle::random_unit_map(rng, 2, 4, 2, 2);
  const Map o2 = oracle::random_unit_map(rng, 2, 4, 2, 2);
  const Map t1 = oracle::random_unit_map(rng, 2, 4, 2, 2);
  const Map t2 = oracle::random_unit_map(rng, 2, 4, 2, 2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<GridCoords> c1, c2;
  for (int b = 0; b < 2; ++b)
    for (auto* c : {&c1, &c2})
    {
      GridCoords g{Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2)};
      for (Eigen::Index i = 0; i < 4; ++i)
      {
        g.xs.data()[i] = u(rng);
        g.ys.data()[i] = u(rng);
      }
      c->push_back(g);
    }
  const double a =
      symmetric_step_loss(pseudo, o1, o2, t1, t2, c1, c2, 0.5, 1.0, BnMode::train).total;
  const double b =
      symmetric_step_loss(pseudo, o2, o1, t2, t1, c2, c1, 0.5, 1.0, BnMode::train).total;
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(Affinity, RowsSumToOne)
{
  Rng rng(9);
  const Map r = oracle::random_map(rng, 1, 4, 3, 3);
  const Map q = oracle::random_map(rng, 1, 4, 3, 3);
  for (double t : {0.07, 1.0, 10.0})
  {
    const auto s = affinity(r, q, t);
    EXPECT_LT((s.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-5);
  }
  const auto flat = affinity(r, q, 1e9);
  EXPECT_LT((flat.array() - 1.0 / 9).abs().maxCoeff(), 1e-6);
  EXPECT_THROW(affinity(r, q, 0.0), Error);
}

TEST(Affinity, MatchesHandSoftmax)
{
  Map r(1, 2, 1, 3), q(1, 2, 1, 3);
  r.values << 1, 0, 0.5, 0, 1, 0.5;
  q.values << 0.2, -1, 0.3, 0.7, 0.1, 0.9;
  const double t = 0.5;
  const auto s = affinity(r, q, t);
  for (int i = 0; i < 3; ++i)
  {
    double z = 0;
    for (int j = 0; j < 3; ++j)
      z += std::exp(oracle::dot(oracle::location(r, 0, i), oracle::location(q, 0, j)) / t);
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(s(i, j),
                  std::exp(oracle::dot(oracle::location(r, 0, i), oracle::location(q, 0, j)) / t) / z,
                  1e-14);
  }
}

TEST(Baselines, IdentityCase)
{
  Rng rng(10);
  const Map f = oracle::random_map(rng, 1, 3, 2, 2);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  const auto l = baseline_losses(f, f, id, id, {{0, 1, {2}}});
  EXPECT_NEAR(l.photometric, 0.0, 1e-24);
  EXPECT_NEAR(l.cycle, 0.0, 1e-24);
}

TEST(Baselines, EqualLogitsGiveZeroContrastive)
{
  const Map f(1, 2, 2, 2);
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(4, 4, 0.3);
  const auto l = baseline_losses(f, f, s, s, {{0, 1, {2}}});
  EXPECT_NEAR(l.contrastive, 0.0, 1e-15);
  EXPECT_THROW(baseline_losses(f, f, s, s, {{0, 1, {}}}), EmptyNegativeSet);
}

TEST(Baselines, MatchScalarReimplementation)
{
  Rng rng(11);
  const Map r = oracle::random_map(rng, 1, 3, 2, 2);
  const Map q = oracle::random_map(rng, 1, 3, 2, 2);
  const Eigen::MatrixXd sf = affinity(r, q, 0.5), sb = affinity(q, r, 0.5);
  const std::vector<ContrastivePair> pairs{{0, 1, {2, 3}}, {3, 0, {1}}};
  const auto l = baseline_losses(r, q, sf, sb, pairs);

  double photo = 0, cycle = 0;
  for (int j = 0; j < 4; ++j)
    for (int c = 0; c < 3; ++c)
    {
      double rec = 0;
      for (int i = 0; i < 4; ++i)
        rec += sf(i, j) * r.values(c, i);
      photo += (q.values(c, j) - rec) * (q.values(c, j) - rec);
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
    {
      double v = 0;
      for (int k = 0; k < 4; ++k)
        v += sf(i, k) * sb(k, j);
      v -= i == j;
      cycle += v * v;
    }
  double contrast = 0;
  for (const auto& p : pairs)
  {
    double z = 0;
    for (int n : p.negatives)
      z += std::exp(sf(p.anchor, n));
    contrast += std::log(z) - sf(p.anchor, p.positive);
  }
  EXPECT_NEAR(l.photometric, photo, 1e-12);
  EXPECT_NEAR(l.cycle, cycle, 1e-12);
  EXPECT_NEAR(l.contrastive, contrast / 2, 1e-12);
}
