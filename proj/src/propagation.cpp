#include "hvc/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hvc {

ContextBank::ContextBank(ContextEntry anchor, int capacity)
  : anchor_{std::move(anchor)}
  , capacity_{std::max(0, capacity)}
{
}

void ContextBank::push(ContextEntry entry)
{
  if (capacity_ == 0)
    return;
  recent_.push_back(std::move(entry));
  while (int(recent_.size()) > capacity_)
    recent_.pop_front();
}

SoftLabels downsample_mask(const LabelImage& hard, int classes, int feat_h, int feat_w)
{
  if (classes < 1)
    throw Error("downsample_mask: need at least one class");
  const int h = int(hard.rows()), w = int(hard.cols());
  SoftLabels out{classes, feat_h, feat_w, Eigen::MatrixXd::Zero(classes, feat_h * feat_w)};
  for (int a = 0; a < feat_h; ++a)
  {
    const int y0 = a * h / feat_h;
    const int y1 = std::max(y0 + 1, (a + 1) * h / feat_h);
    for (int b = 0; b < feat_w; ++b)
    {
      const int x0 = b * w / feat_w;
      const int x1 = std::max(x0 + 1, (b + 1) * w / feat_w);
      auto col = out.values.col(a * feat_w + b);
      for (int y = y0; y < std::min(y1, h); ++y)
        for (int x = x0; x < std::min(x1, w); ++x)
        {
          const int c = hard(y, x);
          if (c < 0 || c >= classes)
            throw Error("downsample_mask: class id " + std::to_string(c) + " out of range");
          col(c) += 1.0;
        }
      const double total = col.sum();
      if (total > 0)
        col /= total;
      else
        col(0) = 1.0;
    }
  }
  return out;
}

LabelImage upsample_argmax(const SoftLabels& soft, int img_h, int img_w)
{
  LabelImage out(img_h, img_w);
  const int h = soft.height, w = soft.width;
  Eigen::VectorXd v(soft.classes);
  for (int y = 0; y < img_h; ++y)
  {
    const double fy = std::clamp((y + 0.5) * h / img_h - 0.5, 0.0, h - 1.0);
    const int y0 = int(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < img_w; ++x)
    {
      const double fx = std::clamp((x + 0.5) * w / img_w - 0.5, 0.0, w - 1.0);
      const int x0 = int(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      v = (1 - ty) * ((1 - tx) * soft.values.col(y0 * w + x0) + tx * soft.values.col(y0 * w + x1)) +
          ty * ((1 - tx) * soft.values.col(y1 * w + x0) + tx * soft.values.col(y1 * w + x1));
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < v.size(); ++c)
        if (v(c) > v(best))
          best = c;
      out(y, x) = int(best);
    }
  }
  return out;
}

SoftLabels propagate_frame(const FeatureMap<double>& query, const ContextBank& bank,
                           const PropagationConfig& cfg)
{
  if (cfg.top_k < 1)
    throw Error("propagate_frame: top_k must be >= 1");
  if (!(cfg.temperature > 0))
    throw Error("propagate_frame: temperature must be positive");

  std::vector<const ContextEntry*> refs{&bank.anchor()};
  for (const auto& e : bank.recent())
    refs.push_back(&e);

  const int hw = query.locations();
  const int classes = bank.anchor().labels.classes;
  for (const auto* r : refs)
  {
    if (r->features.channels != query.channels || r->features.height != query.height ||
        r->features.width != query.width)
      throw ShapeMismatch("propagate_frame: reference " + r->features.shape_string() +
                          " vs query " + query.shape_string());
    if (r->labels.classes != classes || r->labels.values.cols() != hw)
      throw ShapeMismatch("propagate_frame: reference labels do not match the grid");
  }

  const Eigen::Index n_ref = Eigen::Index(refs.size()) * hw;
  Eigen::MatrixXd ref_feat(query.channels, n_ref);
  Eigen::MatrixXd ref_lab(classes, n_ref);
  for (std::size_t i = 0; i < refs.size(); ++i)
  {
    ref_feat.middleCols(Eigen::Index(i) * hw, hw) = refs[i]->features.sample(0);
    ref_lab.middleCols(Eigen::Index(i) * hw, hw) = refs[i]->labels.values;
  }
  const Eigen::MatrixXd sims = ref_feat.transpose() * query.sample(0);

  SoftLabels out{classes, query.height, query.width, Eigen::MatrixXd::Zero(classes, hw)};
  std::vector<Eigen::Index> idx;
  for (int q = 0; q < hw; ++q)
  {
    idx.clear();
    const int qy = q / query.width, qx = q % query.width;
    for (Eigen::Index r = 0; r < n_ref; ++r)
    {
      if (cfg.locality_radius > 0)
      {
        const int cell = int(r % hw);
        if (std::abs(cell / query.width - qy) > cfg.locality_radius ||
            std::abs(cell % query.width - qx) > cfg.locality_radius)
          continue;
      }
      idx.push_back(r);
    }
    const auto better = [&](Eigen::Index a, Eigen::Index b) {
      return sims(a, q) > sims(b, q) || (sims(a, q) == sims(b, q) && a < b);
    };
    const std::size_t k = std::min<std::size_t>(std::size_t(cfg.top_k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);

    const double top = sims(idx[0], q);
    double norm = 0;
    for (std::size_t i = 0; i < k; ++i)
    {
      const double wgt = std::exp((sims(idx[i], q) - top) / cfg.temperature);
      out.values.col(q) += wgt * ref_lab.col(idx[i]);
      norm += wgt;
    }
    out.values.col(q) /= norm;
  }
  return out;
}

FeatureExtractor target_extractor(const EncoderNet<float>& net, double input_scale)
{
  if (!(input_scale > 0))
    throw Error("target_extractor: input_scale must be positive");
  return [&net, input_scale](const ImageBuffer& frame) {
    if (input_scale == 1.0)
      return encode_target(net, to_feature_map<float>({frame}), BnMode::eval).cast<double>();
    const int h = std::max(1, int(std::lround(frame.height * input_scale)));
    const int w = std::max(1, int(std::lround(frame.width * input_scale)));
    const auto resized = resize_crop(frame, {0, 0, frame.width, frame.height, h, w});
    return encode_target(net, to_feature_map<float>({resized}), BnMode::eval).cast<double>();
  };
}

std::vector<LabelImage> run_video(const FeatureExtractor& extract,
                                  const std::vector<ImageBuffer>& frames,
                                  const LabelImage& first_mask, const PropagationConfig& cfg,
                                  int classes)
{
  if (frames.size() < 2)
    throw Error("run_video needs at least two frames");
  if (classes <= 0)
    classes = first_mask.size() ? first_mask.maxCoeff() + 1 : 1;

  auto f0 = extract(frames[0]);
  const int img_h = int(first_mask.rows()), img_w = int(first_mask.cols());
  ContextBank bank({f0, downsample_mask(first_mask, classes, f0.height, f0.width)},
                   cfg.n_context);

  std::vector<LabelImage> masks{first_mask};
  for (std::size_t t = 1; t < frames.size(); ++t)
  {
    auto feat = extract(frames[t]);
    auto soft = propagate_frame(feat, bank, cfg);
    masks.push_back(upsample_argmax(soft, img_h, img_w));
    bank.push({std::move(feat), std::move(soft)});
  }
  return masks;
}

} /* namespace hvc */
