#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "hvc/geometry.hpp"
#include "hvc/network.hpp"

namespace hvc {

// Denominator guard of the masked mean.
inline constexpr double mask_guard = 1e-6;

struct LossValue
{
  double total = 0.0;
  // Positive similarity means; total = -(static_term + alpha * dynamic_term).
  double static_term = 0.0;
  double dynamic_term = 0.0;
  long positives = 0;

  LossValue& operator+=(const LossValue& o)
  {
    total += o.total;
    static_term += o.static_term;
    dynamic_term += o.dynamic_term;
    positives += o.positives;
    return *this;
  }
};

// values(i, j) = <a_i, b_j> over the locations of one sample.
template <typename Scalar>
Matrix<Scalar> similarity_matrix(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b,
                                 int sample = 0)
{
  require_same_shape(a, b, "similarity_matrix");
  return a.sample(sample).transpose() * b.sample(sample);
}

template <typename Scalar, typename MaskDerived>
Scalar masked_mean(const Matrix<Scalar>& t, const Eigen::MatrixBase<MaskDerived>& mask)
{
  if (t.rows() != mask.rows() || t.cols() != mask.cols())
    throw ShapeMismatch("masked_mean: similarity and mask differ in shape");
  const auto a = mask.template cast<Scalar>();
  return t.cwiseProduct(a).sum() / (a.sum() + Scalar(mask_guard));
}

template <typename Scalar>
struct HybridGrads
{
  FeatureMap<Scalar> d_f1;
  FeatureMap<Scalar> d_m1;
  FeatureMap<Scalar> d_m2;
};

// Batch-mean hybrid loss of one direction. f1 carries gradient, f2 is the
// stop-gradient partner; m1 / m2 are raw pseudo-dynamic signals and get
// l2-normalized per location here. masks[b] belongs to sample b.
template <typename Scalar>
LossValue hybrid_loss(const FeatureMap<Scalar>& f1, const FeatureMap<Scalar>& f2,
                      const FeatureMap<Scalar>& m1, const FeatureMap<Scalar>& m2,
                      const std::vector<PositiveMask>& masks, double alpha,
                      HybridGrads<Scalar>* grads = nullptr)
{
  require_same_shape(f1, f2, "hybrid_loss(F)");
  require_same_shape(m1, m2, "hybrid_loss(M)");
  if (m1.batch != f1.batch || m1.height != f1.height || m1.width != f1.width)
    throw ShapeMismatch("hybrid_loss: signal grid " + m1.shape_string() +
                        " vs features " + f1.shape_string());
  if (int(masks.size()) != f1.batch)
    throw ShapeMismatch("hybrid_loss: one mask per sample required");

  L2NormCache<Scalar> c1, c2;
  const auto n1 = l2norm_forward(m1, grads ? &c1 : nullptr);
  const auto n2 = l2norm_forward(m2, grads ? &c2 : nullptr);

  if (grads)
  {
    grads->d_f1 = FeatureMap<Scalar>(f1.batch, f1.channels, f1.height, f1.width);
    grads->d_m1 = FeatureMap<Scalar>(m1.batch, m1.channels, m1.height, m1.width);
    grads->d_m2 = grads->d_m1;
  }

  const Scalar inv_batch = Scalar(1) / Scalar(f1.batch);
  const Scalar a = Scalar(alpha);
  LossValue out;
  FeatureMap<Scalar> dn1, dn2;
  if (grads)
  {
    dn1 = grads->d_m1;
    dn2 = grads->d_m1;
  }
  for (int b = 0; b < f1.batch; ++b)
  {
    const auto& mask = masks[b];
    const Eigen::Index hw = f1.locations();
    if (mask.values.rows() != hw || mask.values.cols() != hw)
      throw ShapeMismatch("hybrid_loss: mask does not match the feature grid");
    const Matrix<Scalar> am = mask.values.template cast<Scalar>();
    const Scalar den = am.sum() + Scalar(mask_guard);

    const Scalar s = masked_mean(similarity_matrix(f1, f2, b), am);
    const Scalar d = masked_mean(similarity_matrix(n1, n2, b), am);
    out.static_term += double(s * inv_batch);
    out.dynamic_term += double(d * inv_batch);
    out.positives += mask.popcount;

    if (grads)
    {
      const Scalar k = -inv_batch / den;
      grads->d_f1.sample(b).noalias() = k * (f2.sample(b) * am.transpose());
      dn1.sample(b).noalias() = (k * a) * (n2.sample(b) * am.transpose());
      dn2.sample(b).noalias() = (k * a) * (n1.sample(b) * am);
    }
  }
  out.total = -(out.static_term + alpha * out.dynamic_term);
  if (grads)
  {
    grads->d_m1 = l2norm_backward(c1, dn1);
    grads->d_m2 = l2norm_backward(c2, dn2);
  }
  return out;
}

// Masks for every sample of a batch: rows follow coords_a, columns coords_b.
inline std::vector<PositiveMask> positive_masks(const std::vector<GridCoords>& coords_a,
                                                const std::vector<GridCoords>& coords_b,
                                                double radius)
{
  if (coords_a.size() != coords_b.size())
    throw ShapeMismatch("positive_masks: coordinate batches differ in size");
  std::vector<PositiveMask> out;
  out.reserve(coords_a.size());
  for (std::size_t i = 0; i < coords_a.size(); ++i)
    out.push_back(positive_mask(distance_matrix(coords_a[i], coords_b[i]), radius));
  return out;
}

template <typename Scalar>
struct DirectionalCache
{
  PseudoDynamicCache<Scalar> forward;   // pseudo(o, t)
  PseudoDynamicCache<Scalar> backward;  // pseudo(t, o)
  HybridGrads<Scalar> grads;
};

// One direction: M1 = pseudo(o, t), M2 = pseudo(t, o), then the hybrid loss.
template <typename Scalar>
LossValue directional_loss(const PseudoDynamicNet<Scalar>& pseudo, const FeatureMap<Scalar>& o,
                           const FeatureMap<Scalar>& t, const std::vector<PositiveMask>& masks,
                           double alpha, BnMode mode, DirectionalCache<Scalar>* cache = nullptr)
{
  const auto m1 = pseudo.forward(o, t, mode, cache ? &cache->forward : nullptr);
  const auto m2 = pseudo.forward(t, o, mode, cache ? &cache->backward : nullptr);
  return hybrid_loss(o, t, m1, m2, masks, alpha, cache ? &cache->grads : nullptr);
}

// Backpropagates a directional loss into the pseudo-dynamic net and returns
// the gradient with respect to the online features o.
template <typename Scalar>
FeatureMap<Scalar> directional_backward(PseudoDynamicNet<Scalar>& pseudo,
                                        const DirectionalCache<Scalar>& cache)
{
  FeatureMap<Scalar> d_o = cache.grads.d_f1;
  d_o.values += pseudo.backward(cache.forward, cache.grads.d_m1, InputGrad::first).first.values;
  d_o.values +=
      pseudo.backward(cache.backward, cache.grads.d_m2, InputGrad::second).second.values;
  return d_o;
}

template <typename Scalar>
struct SymmetricCache
{
  DirectionalCache<Scalar> first;   // (o1, t2)
  DirectionalCache<Scalar> second;  // (o2, t1)
};

// hybrid(o1, t2, c1, c2) + hybrid(o2, t1, c2, c1); masks_12 rows index view-1
// cells, masks_21 is its per-sample transpose.
template <typename Scalar>
LossValue symmetric_step_loss(const PseudoDynamicNet<Scalar>& pseudo,
                              const FeatureMap<Scalar>& o1, const FeatureMap<Scalar>& o2,
                              const FeatureMap<Scalar>& t1, const FeatureMap<Scalar>& t2,
                              const std::vector<PositiveMask>& masks_12,
                              const std::vector<PositiveMask>& masks_21, double alpha,
                              BnMode mode = BnMode::train,
                              SymmetricCache<Scalar>* cache = nullptr)
{
  LossValue total =
      directional_loss(pseudo, o1, t2, masks_12, alpha, mode, cache ? &cache->first : nullptr);
  total += directional_loss(pseudo, o2, t1, masks_21, alpha, mode,
                            cache ? &cache->second : nullptr);
  return total;
}

template <typename Scalar>
LossValue symmetric_step_loss(const PseudoDynamicNet<Scalar>& pseudo,
                              const FeatureMap<Scalar>& o1, const FeatureMap<Scalar>& o2,
                              const FeatureMap<Scalar>& t1, const FeatureMap<Scalar>& t2,
                              const std::vector<GridCoords>& coords1,
                              const std::vector<GridCoords>& coords2, double radius,
                              double alpha, BnMode mode = BnMode::train,
                              SymmetricCache<Scalar>* cache = nullptr)
{
  return symmetric_step_loss(pseudo, o1, o2, t1, t2, positive_masks(coords1, coords2, radius),
                             positive_masks(coords2, coords1, radius), alpha, mode, cache);
}

// ---------------------------------------------------------------------------
// Affinity and the video-based baseline objectives
// ---------------------------------------------------------------------------

// S(i, j) = softmax_j(<ref_i, query_j> / temperature) for one sample.
template <typename Scalar>
Matrix<Scalar> affinity(const FeatureMap<Scalar>& ref, const FeatureMap<Scalar>& query,
                        double temperature, int sample = 0)
{
  if (ref.channels != query.channels)
    throw ShapeMismatch("affinity: channel counts differ");
  if (!(temperature > 0))
    throw Error("affinity: temperature must be positive");
  Matrix<Scalar> logits = ref.sample(sample).transpose() * query.sample(sample);
  logits /= Scalar(temperature);
  const Vector<Scalar> row_max = logits.rowwise().maxCoeff();
  logits = (logits.colwise() - row_max).array().exp().matrix();
  const Vector<Scalar> row_sum = logits.rowwise().sum();
  return row_sum.cwiseInverse().asDiagonal() * logits;
}

struct ContrastivePair
{
  int anchor = 0;
  int positive = 0;
  std::vector<int> negatives;
};

struct BaselineLosses
{
  double photometric = 0.0;
  double cycle = 0.0;
  double contrastive = 0.0;
};

// Photometric reconstruction, cycle consistency and contrastive matching on
// one (ref, query) sample. The contrastive term averages over `pairs` and
// reads its logits from s_fwd.
template <typename Scalar>
BaselineLosses baseline_losses(const FeatureMap<Scalar>& ref, const FeatureMap<Scalar>& query,
                               const Matrix<Scalar>& s_fwd, const Matrix<Scalar>& s_bwd,
                               const std::vector<ContrastivePair>& pairs, int sample = 0)
{
  require_same_shape(ref, query, "baseline_losses");
  const Eigen::Index hw = ref.locations();
  if (s_fwd.rows() != hw || s_fwd.cols() != hw || s_bwd.rows() != hw || s_bwd.cols() != hw)
    throw ShapeMismatch("baseline_losses: affinity size does not match the grid");

  BaselineLosses out;
  // Rows are locations: reconstruct the query from the reference.
  const Matrix<Scalar> recon = s_fwd.transpose() * ref.sample(sample).transpose();
  out.photometric = double((query.sample(sample).transpose() - recon).squaredNorm());
  out.cycle = double((s_fwd * s_bwd - Matrix<Scalar>::Identity(hw, hw)).squaredNorm());

  if (!pairs.empty())
  {
    double sum = 0.0;
    for (const auto& p : pairs)
    {
      if (p.negatives.empty())
        throw EmptyNegativeSet("contrastive matching needs at least one negative");
      double denom = 0.0;
      for (int n : p.negatives)
      {
        if (n == p.positive)
          throw Error("contrastive matching: positive index listed as negative");
        denom += std::exp(double(s_fwd(p.anchor, n)));
      }
      sum += -(double(s_fwd(p.anchor, p.positive)) - std::log(denom));
    }
    out.contrastive = sum / double(pairs.size());
  }
  return out;
}

} /* namespace hvc */
