#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "hvc/geometry.hpp"
#include "hvc/image_io.hpp"
#include "hvc/network.hpp"

namespace hvc {

struct PropagationConfig
{
  int n_context = 5;
  int top_k = 10;
  double temperature = 0.07;
  // Restrict matches to reference cells within this Chebyshev radius of the
  // query cell; 0 disables the restriction.
  int locality_radius = 0;
  // Frames are resized by this factor before encoding; labels are always
  // produced at the original frame size.
  double input_scale = 2.0;
};

// K x (h * w) class probabilities at feature resolution; columns sum to 1.
struct SoftLabels
{
  int classes = 0;
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;
};

struct ContextEntry
{
  FeatureMap<double> features;  // one sample, C x h x w
  SoftLabels labels;
};

// First-frame anchor plus a FIFO of the most recent predictions.
class ContextBank
{
public:
  ContextBank(ContextEntry anchor, int capacity);

  void push(ContextEntry entry);

  const ContextEntry& anchor() const
  {
    return anchor_;
  }
  const std::deque<ContextEntry>& recent() const
  {
    return recent_;
  }
  std::size_t size() const
  {
    return 1 + recent_.size();
  }

private:
  ContextEntry anchor_;
  std::deque<ContextEntry> recent_;
  int capacity_ = 0;
};

// Per-cell class histogram over the covered pixels.
SoftLabels downsample_mask(const LabelImage& hard, int classes, int feat_h, int feat_w);

// Bilinear upsampling to img_h x img_w followed by argmax (ties -> lower id).
LabelImage upsample_argmax(const SoftLabels& soft, int img_h, int img_w);

// For every query cell: dot products against all reference cells, top-k,
// temperature softmax over the kept entries, weighted label average.
SoftLabels propagate_frame(const FeatureMap<double>& query, const ContextBank& bank,
                           const PropagationConfig& cfg);

using FeatureExtractor = std::function<FeatureMap<double>(const ImageBuffer&)>;

// Eval-mode target branch of a trained encoder, applied to the frame resized
// by `input_scale`. The extractor keeps a reference to `net`.
FeatureExtractor target_extractor(const EncoderNet<float>& net, double input_scale = 1.0);

// Masks for every frame; frame 0 is the given mask. `classes` = 0 derives K
// from the largest id in first_mask.
std::vector<LabelImage> run_video(const FeatureExtractor& extract,
                                  const std::vector<ImageBuffer>& frames,
                                  const LabelImage& first_mask, const PropagationConfig& cfg,
                                  int classes = 0);

} /* namespace hvc */
