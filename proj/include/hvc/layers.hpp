#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "hvc/parameter_store.hpp"

namespace hvc {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Conv2dCache
{
  int batch = 0;
  int in_height = 0;
  int in_width = 0;
  // im2col matrix, (in_ch * k * k) x (batch * out_h * out_w).
  Matrix<Scalar> columns;
};

// Square, odd-sized cross-correlation with zero padding. Weights are stored
// out_ch x in_ch x k x k (row-major), bias out_ch.
template <typename Scalar>
struct Conv2d
{
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Conv2d create(ParameterStore<Scalar>& store, const std::string& prefix,
                       int in_ch, int out_ch, int k, int stride)
  {
    if (k % 2 == 0)
      throw ShapeMismatch("kernel size must be odd: " + prefix);
    Conv2d c;
    c.in_channels = in_ch;
    c.out_channels = out_ch;
    c.kernel = k;
    c.stride = stride;
    c.padding = (k - 1) / 2;
    c.weight = store.add(prefix + ".weight", {out_ch, in_ch, k, k});
    c.bias = store.add(prefix + ".bias", {out_ch});
    return c;
  }

  int fan_in() const
  {
    return in_channels * kernel * kernel;
  }

  int out_size(int n) const
  {
    return (n + 2 * padding - kernel) / stride + 1;
  }

  bool is_pointwise() const
  {
    return kernel == 1 && stride == 1;
  }

  // Kaiming-uniform over fan-in, the same bound for weights and bias.
  template <typename Rng>
  void init(ParameterStore<Scalar>& store, Rng& rng) const
  {
    const double bound = std::sqrt(6.0 / fan_in());
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : store[weight].value)
      v = Scalar(u(rng));
    const double bias_bound = 1.0 / std::sqrt(double(fan_in()));
    std::uniform_real_distribution<double> ub(-bias_bound, bias_bound);
    for (auto& v : store[bias].value)
      v = Scalar(ub(rng));
  }

  auto weight_matrix(const ParameterStore<Scalar>& store) const
  {
    return Eigen::Map<const RowMajorMatrix<Scalar>>(
        store[weight].value.data(), out_channels, fan_in());
  }

  FeatureMap<Scalar> forward(const ParameterStore<Scalar>& store,
                             const FeatureMap<Scalar>& x,
                             Conv2dCache<Scalar>* cache = nullptr) const
  {
    if (x.channels != in_channels)
      throw ShapeMismatch("conv expects " + std::to_string(in_channels) +
                          " channels, got " + x.shape_string());
    const int oh = out_size(x.height);
    const int ow = out_size(x.width);
    FeatureMap<Scalar> y(x.batch, out_channels, oh, ow);

    Conv2dCache<Scalar> local;
    auto& c = cache ? *cache : local;
    c.batch = x.batch;
    c.in_height = x.height;
    c.in_width = x.width;

    const auto w = weight_matrix(store);
    if (is_pointwise())
    {
      y.values.noalias() = w * x.values;
      if (cache)
        c.columns = x.values;
    }
    else
    {
      im2col(x, oh, ow, c.columns);
      y.values.noalias() = w * c.columns;
    }
    y.values.colwise() += store[bias].value;
    return y;
  }

  // Accumulates weight and bias gradients into the store and returns the
  // gradient with respect to input channels [in_begin, in_begin + in_count);
  // in_count < 0 means all of them.
  FeatureMap<Scalar> backward(ParameterStore<Scalar>& store,
                              const Conv2dCache<Scalar>& c,
                              const FeatureMap<Scalar>& dy, int in_begin = 0,
                              int in_count = -1) const
  {
    if (in_count < 0)
      in_count = in_channels - in_begin;
    if (in_begin < 0 || in_begin + in_count > in_channels)
      throw ShapeMismatch("conv backward: input channel range out of bounds");
    if (dy.channels != out_channels || dy.values.cols() != c.columns.cols())
      throw ShapeMismatch("conv backward: gradient " + dy.shape_string());

    Eigen::Map<RowMajorMatrix<Scalar>> dw(store[weight].grad.data(),
                                          out_channels, fan_in());
    dw.noalias() += dy.values * c.columns.transpose();
    store[bias].grad += dy.values.rowwise().sum();

    const int kk = kernel * kernel;
    const auto w = weight_matrix(store).middleCols(in_begin * kk, in_count * kk);
    FeatureMap<Scalar> dx(c.batch, in_count, c.in_height, c.in_width);
    if (is_pointwise())
    {
      dx.values.noalias() = w.transpose() * dy.values;
    }
    else
    {
      Matrix<Scalar> dcols = w.transpose() * dy.values;
      col2im(dcols, dy.height, dy.width, dx);
    }
    return dx;
  }

private:
  void im2col(const FeatureMap<Scalar>& x, int oh, int ow, Matrix<Scalar>& cols) const
  {
    const int k = kernel;
    const int kk = k * k;
    cols.setZero(fan_in(), Eigen::Index(x.batch) * oh * ow);
    using Strided = Eigen::Map<Vector<Scalar>, 0, Eigen::InnerStride<>>;
    for (int b = 0; b < x.batch; ++b)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
        {
          const Eigen::Index col = (Eigen::Index(b) * oh + oy) * ow + ox;
          Scalar* dst = cols.col(col).data();
          for (int dy = 0; dy < k; ++dy)
          {
            const int iy = oy * stride - padding + dy;
            if (iy < 0 || iy >= x.height)
              continue;
            for (int dx = 0; dx < k; ++dx)
            {
              const int ix = ox * stride - padding + dx;
              if (ix < 0 || ix >= x.width)
                continue;
              const Eigen::Index src =
                  (Eigen::Index(b) * x.height + iy) * x.width + ix;
              Strided(dst + dy * k + dx, in_channels, Eigen::InnerStride<>(kk)) =
                  x.values.col(src);
            }
          }
        }
  }

  void col2im(const Matrix<Scalar>& dcols, int oh, int ow, FeatureMap<Scalar>& dx) const
  {
    const int k = kernel;
    const int kk = k * k;
    using Strided = Eigen::Map<const Vector<Scalar>, 0, Eigen::InnerStride<>>;
    for (int b = 0; b < dx.batch; ++b)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
        {
          const Eigen::Index col = (Eigen::Index(b) * oh + oy) * ow + ox;
          const Scalar* src = dcols.col(col).data();
          for (int dy = 0; dy < k; ++dy)
          {
            const int iy = oy * stride - padding + dy;
            if (iy < 0 || iy >= dx.height)
              continue;
            for (int ddx = 0; ddx < k; ++ddx)
            {
              const int ix = ox * stride - padding + ddx;
              if (ix < 0 || ix >= dx.width)
                continue;
              const Eigen::Index dst =
                  (Eigen::Index(b) * dx.height + iy) * dx.width + ix;
              dx.values.col(dst) +=
                  Strided(src + dy * k + ddx, dx.channels, Eigen::InnerStride<>(kk));
            }
          }
        }
  }
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BnMode
{
  train,  // batch statistics; caller folds them into the running buffers
  eval,   // running statistics only
};

template <typename Scalar>
struct BatchNormCache
{
  BnMode mode = BnMode::train;
  Matrix<Scalar> normalized;  // x_hat
  Vector<Scalar> inv_std;
  Vector<Scalar> batch_mean;
  Vector<Scalar> batch_var;  // biased
  Eigen::Index count = 0;
};

// Per-channel normalization over (batch, H, W).
template <typename Scalar>
struct BatchNorm
{
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;

  static BatchNorm create(ParameterStore<Scalar>& store, const std::string& prefix,
                          int channels)
  {
    BatchNorm bn;
    bn.channels = channels;
    bn.gamma = store.add(prefix + ".gamma", {channels});
    bn.beta = store.add(prefix + ".beta", {channels});
    bn.running_mean = store.add(prefix + ".running_mean", {channels}, false);
    bn.running_var = store.add(prefix + ".running_var", {channels}, false);
    bn.reset(store);
    return bn;
  }

  void reset(ParameterStore<Scalar>& store) const
  {
    store[gamma].value.setOnes();
    store[beta].value.setZero();
    store[running_mean].value.setZero();
    store[running_var].value.setOnes();
  }

  FeatureMap<Scalar> forward(const ParameterStore<Scalar>& store,
                             const FeatureMap<Scalar>& x, BnMode mode,
                             BatchNormCache<Scalar>* cache = nullptr) const
  {
    if (x.channels != channels)
      throw ShapeMismatch("batchnorm expects " + std::to_string(channels) +
                          " channels, got " + x.shape_string());
    BatchNormCache<Scalar> local;
    auto& c = cache ? *cache : local;
    c.mode = mode;
    c.count = x.values.cols();

    if (mode == BnMode::train)
    {
      if (c.count == 0)
        throw DegenerateBatch("batchnorm on an empty batch");
      c.batch_mean = x.values.rowwise().mean();
      c.normalized = x.values.colwise() - c.batch_mean;
      c.batch_var = c.normalized.array().square().rowwise().mean();
      if (!c.batch_var.allFinite())
        throw DegenerateBatch("batchnorm variance is not finite");
      c.inv_std = (c.batch_var.array() + Scalar(eps)).rsqrt();
    }
    else
    {
      c.normalized = x.values.colwise() - store[running_mean].value;
      c.inv_std = (store[running_var].value.array() + Scalar(eps)).rsqrt();
    }
    c.normalized = c.inv_std.asDiagonal() * c.normalized;

    FeatureMap<Scalar> y(x.batch, x.channels, x.height, x.width);
    y.values = store[gamma].value.asDiagonal() * c.normalized;
    y.values.colwise() += store[beta].value;
    return y;
  }

  // Folds the batch statistics of a train-mode forward into the running
  // buffers (unbiased variance, like the usual framework convention).
  void update_running(ParameterStore<Scalar>& store, const BatchNormCache<Scalar>& c) const
  {
    if (c.mode != BnMode::train)
      return;
    const Scalar m = Scalar(momentum);
    const Scalar unbias =
        c.count > 1 ? Scalar(c.count) / Scalar(c.count - 1) : Scalar(1);
    auto& rm = store[running_mean].value;
    auto& rv = store[running_var].value;
    rm = (Scalar(1) - m) * rm + m * c.batch_mean;
    rv = (Scalar(1) - m) * rv + (m * unbias) * c.batch_var;
  }

  FeatureMap<Scalar> backward(ParameterStore<Scalar>& store,
                              const BatchNormCache<Scalar>& c,
                              const FeatureMap<Scalar>& dy) const
  {
    if (dy.channels != channels || dy.values.cols() != c.normalized.cols())
      throw ShapeMismatch("batchnorm backward: gradient " + dy.shape_string());

    store[beta].grad += dy.values.rowwise().sum();
    store[gamma].grad += dy.values.cwiseProduct(c.normalized).rowwise().sum();

    FeatureMap<Scalar> dx(dy.batch, dy.channels, dy.height, dy.width);
    const Vector<Scalar> scale =
        store[gamma].value.cwiseProduct(c.inv_std);  // gamma / sigma
    if (c.mode == BnMode::eval)
    {
      dx.values = scale.asDiagonal() * dy.values;
      return dx;
    }

    // dx = gamma/sigma * (dy - mean(dy) - x_hat * mean(dy * x_hat))
    const Scalar n = Scalar(c.count);
    const Vector<Scalar> mean_dy = dy.values.rowwise().sum() / n;
    const Vector<Scalar> mean_dy_xhat =
        dy.values.cwiseProduct(c.normalized).rowwise().sum() / n;
    dx.values = dy.values.colwise() - mean_dy;
    dx.values -= mean_dy_xhat.asDiagonal() * c.normalized;
    dx.values = scale.asDiagonal() * dx.values;
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ReluCache
{
  Matrix<Scalar> input;
};

template <typename Scalar>
FeatureMap<Scalar> relu_forward(const FeatureMap<Scalar>& x,
                                ReluCache<Scalar>* cache = nullptr)
{
  FeatureMap<Scalar> y = x;
  y.normalized = false;
  y.values = x.values.cwiseMax(Scalar(0));
  if (cache)
    cache->input = x.values;
  return y;
}

template <typename Scalar>
FeatureMap<Scalar> relu_backward(const ReluCache<Scalar>& c, const FeatureMap<Scalar>& dy)
{
  FeatureMap<Scalar> dx = dy;
  dx.values = (c.input.array() > Scalar(0)).select(dy.values, Scalar(0));
  return dx;
}

// Smallest |pre-activation| seen by a ReLU; finite-difference checks need
// this to stay clear of the kink.
template <typename Scalar>
Scalar relu_margin(const ReluCache<Scalar>& c)
{
  return c.input.size() ? c.input.cwiseAbs().minCoeff()
                        : std::numeric_limits<Scalar>::infinity();
}

inline constexpr double l2norm_eps = 1e-12;

template <typename Scalar>
struct L2NormCache
{
  Matrix<Scalar> input;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> norms;
};

// Divides every location's channel vector by (||v|| + 1e-12).
template <typename Scalar>
FeatureMap<Scalar> l2norm_forward(const FeatureMap<Scalar>& x,
                                  L2NormCache<Scalar>* cache = nullptr)
{
  FeatureMap<Scalar> y = x;
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> norms = x.values.colwise().norm();
  y.values = x.values *
             (norms.array() + Scalar(l2norm_eps)).inverse().matrix().asDiagonal();
  y.normalized = true;
  if (cache)
  {
    cache->input = x.values;
    cache->norms = norms;
  }
  return y;
}

// Exact Jacobian of x / (||x|| + eps):
//   dx = dy / (n + eps) - x (x . dy) / (n (n + eps)^2)
template <typename Scalar>
FeatureMap<Scalar> l2norm_backward(const L2NormCache<Scalar>& c,
                                   const FeatureMap<Scalar>& dy)
{
  FeatureMap<Scalar> dx = dy;
  dx.normalized = false;
  const auto cols = c.input.cols();
  for (Eigen::Index j = 0; j < cols; ++j)
  {
    const Scalar n = c.norms(j);
    const Scalar d = n + Scalar(l2norm_eps);
    dx.values.col(j) = dy.values.col(j) / d;
    if (n > Scalar(0))
    {
      const Scalar proj = c.input.col(j).dot(dy.values.col(j));
      dx.values.col(j) -= c.input.col(j) * (proj / (n * d * d));
    }
  }
  return dx;
}

// Stacks two maps along the channel axis.
template <typename Scalar>
FeatureMap<Scalar> concat_channels(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b)
{
  if (a.batch != b.batch || a.height != b.height || a.width != b.width)
    throw ShapeMismatch("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  FeatureMap<Scalar> out(a.batch, a.channels + b.channels, a.height, a.width);
  out.values.topRows(a.channels) = a.values;
  out.values.bottomRows(b.channels) = b.values;
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> slice_channels(const FeatureMap<Scalar>& x, int first, int count)
{
  FeatureMap<Scalar> out(x.batch, count, x.height, x.width);
  out.values = x.values.middleRows(first, count);
  return out;
}

} /* namespace hvc */
