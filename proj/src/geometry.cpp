#include "hvc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hvc {

double crop_iou(const CropSpec& a, const CropSpec& b)
{
  const long iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long inter = iw * ih;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

CropSpec random_resized_crop(int img_h, int img_w, Rng& rng, const CropConfig& cfg)
{
  std::uniform_real_distribution<double> scale(cfg.scale_min, cfg.scale_max);
  std::uniform_real_distribution<double> ratio(cfg.ratio_min, cfg.ratio_max);
  CropSpec c;
  c.out_h = cfg.view_size;
  c.out_w = cfg.view_size;
  for (int attempt = 0; attempt < 10; ++attempt)
  {
    const double area = scale(rng) * double(img_h) * double(img_w);
    const double r = ratio(rng);
    const int w = int(std::lround(std::sqrt(area * r)));
    const int h = int(std::lround(std::sqrt(area / r)));
    if (w < 1 || h < 1 || w > img_w || h > img_h)
      continue;
    std::uniform_int_distribution<int> ux(0, img_w - w);
    std::uniform_int_distribution<int> uy(0, img_h - h);
    c.x0 = ux(rng);
    c.y0 = uy(rng);
    c.x1 = c.x0 + w;
    c.y1 = c.y0 + h;
    return c;
  }

  // Centred crop, as large as the aspect-ratio range allows.
  int w = img_w, h = img_h;
  const double in_ratio = double(img_w) / img_h;
  if (in_ratio < cfg.ratio_min)
    h = std::clamp(int(std::lround(w / cfg.ratio_min)), 1, img_h);
  else if (in_ratio > cfg.ratio_max)
    w = std::clamp(int(std::lround(h * cfg.ratio_max)), 1, img_w);
  c.x0 = (img_w - w) / 2;
  c.y0 = (img_h - h) / 2;
  c.x1 = c.x0 + w;
  c.y1 = c.y0 + h;
  return c;
}

std::pair<CropSpec, CropSpec> sample_crop_pair(int img_h, int img_w, Rng& rng,
                                               const CropConfig& cfg,
                                               const CropProposal& propose)
{
  if (img_h < cfg.min_side || img_w < cfg.min_side)
    throw ShapeMismatch("image " + std::to_string(img_h) + "x" + std::to_string(img_w) +
                        " is below the minimum side " + std::to_string(cfg.min_side));
  for (int attempt = 0; attempt < std::max(1, cfg.max_retries); ++attempt)
  {
    auto pair = propose ? propose(rng)
                        : std::pair{random_resized_crop(img_h, img_w, rng, cfg),
                                    random_resized_crop(img_h, img_w, rng, cfg)};
    if (crop_iou(pair.first, pair.second) >= cfg.min_overlap)
      return pair;
  }
  throw RetriesExhausted("no crop pair with overlap >= " + std::to_string(cfg.min_overlap) +
                         " after " + std::to_string(cfg.max_retries) + " tries");
}

GridCoords warp_coords(const CropSpec& crop, int feat_h, int feat_w, int src_h, int src_w)
{
  if (feat_h < 1 || feat_w < 1)
    throw ShapeMismatch("warp_coords: empty feature grid");
  GridCoords g;
  g.xs.resize(feat_h, feat_w);
  g.ys.resize(feat_h, feat_w);
  const double cw = double(crop.width()) / feat_w;
  const double ch = double(crop.height()) / feat_h;
  for (int a = 0; a < feat_h; ++a)
    for (int b = 0; b < feat_w; ++b)
    {
      g.xs(a, b) = (crop.x0 + (b + 0.5) * cw) / src_w;
      g.ys(a, b) = (crop.y0 + (a + 0.5) * ch) / src_h;
    }
  return g;
}

DistanceMatrix distance_matrix(const GridCoords& a, const GridCoords& b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch("distance_matrix: grids differ in shape");
  const Eigen::Index w = a.cols();
  const Eigen::Index n = a.rows() * w;
  DistanceMatrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    const double xi = a.xs(i / w, i % w);
    const double yi = a.ys(i / w, i % w);
    for (Eigen::Index j = 0; j < n; ++j)
    {
      const double dx = xi - b.xs(j / w, j % w);
      const double dy = yi - b.ys(j / w, j % w);
      d(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  }
  return d;
}

PositiveMask positive_mask(const DistanceMatrix& d, double radius)
{
  if (!(radius > 0.0))
    throw Error("positive_mask: radius must be positive");
  PositiveMask m;
  m.radius = radius;
  m.values = (d.array() <= radius).cast<double>().matrix();
  m.popcount = long(m.values.sum());
  return m;
}

ImageBuffer resize_crop(const ImageBuffer& img, const CropSpec& crop)
{
  ImageBuffer out(crop.out_h, crop.out_w, img.channels);
  const double sx = double(crop.width()) / crop.out_w;
  const double sy = double(crop.height()) / crop.out_h;
  for (int y = 0; y < crop.out_h; ++y)
  {
    const double fy = std::clamp(crop.y0 + (y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = int(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < crop.out_w; ++x)
    {
      const double fx = std::clamp(crop.x0 + (x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = int(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels; ++c)
      {
        const double top = (1 - tx) * img.at(y0, x0, c) + tx * img.at(y0, x1, c);
        const double bot = (1 - tx) * img.at(y1, x0, c) + tx * img.at(y1, x1, c);
        out.at(y, x, c) = float((1 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

} /* namespace hvc */
