#pragma once

#include <Eigen/Core>

#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "hvc/tensor.hpp"

namespace hvc {

using Rng = std::mt19937_64;

// Interleaved RGB, row-major, values in [0, 1].
struct ImageBuffer
{
  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c = 3)
    : height{h}
    , width{w}
    , channels{c}
    , values(std::size_t(h) * w * c, 0.f)
  {
  }

  float& at(int y, int x, int c)
  {
    return values[(std::size_t(y) * width + x) * channels + c];
  }

  float at(int y, int x, int c) const
  {
    return values[(std::size_t(y) * width + x) * channels + c];
  }

  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> values;
};

// Crop rectangle [x0, x1) x [y0, y1) in source pixels, resized to
// out_h x out_w.
struct CropSpec
{
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int out_h = 64;
  int out_w = 64;

  int width() const
  {
    return x1 - x0;
  }
  int height() const
  {
    return y1 - y0;
  }
  long area() const
  {
    return long(width()) * height();
  }

  bool operator==(const CropSpec&) const = default;
};

struct CropConfig
{
  double scale_min = 0.2;  // fraction of the image area
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  double min_overlap = 0.1;  // intersection over union
  int max_retries = 20;
  int view_size = 64;
  int min_side = 32;
};

using CropProposal = std::function<std::pair<CropSpec, CropSpec>(Rng&)>;

// Normalized source-image coordinates of every feature cell centre.
struct GridCoords
{
  Eigen::MatrixXd xs;
  Eigen::MatrixXd ys;

  Eigen::Index rows() const
  {
    return xs.rows();
  }
  Eigen::Index cols() const
  {
    return xs.cols();
  }
};

using DistanceMatrix = Eigen::MatrixXd;

struct PositiveMask
{
  Eigen::MatrixXd values;  // 0 / 1
  double radius = 0.0;
  long popcount = 0;
};

double crop_iou(const CropSpec& a, const CropSpec& b);

CropSpec random_resized_crop(int img_h, int img_w, Rng& rng, const CropConfig& cfg);

// Draws two overlapping crops. Throws RetriesExhausted when max_retries
// proposals all fail the overlap test. `propose` replaces the random
// proposal (tests use it to force specific rectangles).
std::pair<CropSpec, CropSpec> sample_crop_pair(int img_h, int img_w, Rng& rng,
                                               const CropConfig& cfg,
                                               const CropProposal& propose = {});

GridCoords warp_coords(const CropSpec& crop, int feat_h, int feat_w, int src_h, int src_w);

DistanceMatrix distance_matrix(const GridCoords& a, const GridCoords& b);

PositiveMask positive_mask(const DistanceMatrix& d, double radius);

// Bilinear resample of the crop rectangle to out_h x out_w. Output pixel
// centres map to the same locations warp_coords uses for feature cells.
ImageBuffer resize_crop(const ImageBuffer& img, const CropSpec& crop);

// Stacks equally sized RGB images into a batch of 3 x H x W maps.
template <typename Scalar>
FeatureMap<Scalar> to_feature_map(const std::vector<ImageBuffer>& views)
{
  if (views.empty())
    throw ShapeMismatch("to_feature_map: no views");
  const int h = views.front().height;
  const int w = views.front().width;
  const int c = views.front().channels;
  FeatureMap<Scalar> out(int(views.size()), c, h, w);
  for (std::size_t b = 0; b < views.size(); ++b)
  {
    const auto& v = views[b];
    if (v.height != h || v.width != w || v.channels != c)
      throw ShapeMismatch("to_feature_map: views differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          out.values(ch, (Eigen::Index(b) * h + y) * w + x) = Scalar(v.at(y, x, ch));
  }
  return out;
}

} /* namespace hvc */
