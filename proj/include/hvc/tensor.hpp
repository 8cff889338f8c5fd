#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>

#include "hvc/error.hpp"

namespace hvc {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense batch of C x H x W feature maps.
//
// Storage is one column per spatial location: column index
// b * H * W + y * W + x holds the C-vector of sample b at (y, x). Channel
// vectors are therefore contiguous, which is what the 1x1 convolutions, the
// per-location l2 normalization and the similarity matrices all consume.
template <typename Scalar>
struct FeatureMap
{
  using scalar_type = Scalar;

  FeatureMap() = default;

  FeatureMap(int batch_, int channels_, int height_, int width_)
    : batch{batch_}
    , channels{channels_}
    , height{height_}
    , width{width_}
    , values(Matrix<Scalar>::Zero(channels_, batch_ * height_ * width_))
  {
  }

  int locations() const
  {
    return height * width;
  }

  // Columns of sample b.
  auto sample(int b)
  {
    return values.middleCols(b * locations(), locations());
  }

  auto sample(int b) const
  {
    return values.middleCols(b * locations(), locations());
  }

  bool same_shape(const FeatureMap& other) const
  {
    return batch == other.batch && channels == other.channels &&
           height == other.height && width == other.width;
  }

  std::string shape_string() const
  {
    return std::to_string(batch) + "x" + std::to_string(channels) + "x" +
           std::to_string(height) + "x" + std::to_string(width);
  }

  template <typename Other>
  FeatureMap<Other> cast() const
  {
    FeatureMap<Other> out;
    out.batch = batch;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.normalized = normalized;
    out.values = values.template cast<Other>();
    return out;
  }

  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  bool normalized = false;
  Matrix<Scalar> values;
};

template <typename Scalar>
void require_same_shape(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b,
                        const char* where)
{
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(where) + ": " + a.shape_string() + " vs " +
                        b.shape_string());
}

} /* namespace hvc */
