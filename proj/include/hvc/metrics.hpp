#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hvc/image_io.hpp"
#include "hvc/tensor.hpp"

namespace hvc {

using BinaryMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline BinaryMask class_mask(const LabelImage& labels, int class_id)
{
  return labels.array() == class_id;
}

// Region similarity: |pred & gt| / |pred | gt|, 1 when both are empty.
double jaccard(const BinaryMask& pred, const BinaryMask& gt);

// Foreground pixels with a 4-neighbour background pixel. The image border
// does not count as background.
BinaryMask boundary_map(const BinaryMask& mask);

// Morphological dilation by a disc {dx^2 + dy^2 <= r^2}.
BinaryMask dilate_disc(const BinaryMask& mask, int radius);

// Tolerance radius in pixels: ceil(tol_frac * image diagonal).
int boundary_tolerance(int height, int width, double tol_frac);

// Boundary F-measure under a dilation tolerance of tol_frac of the image
// diagonal. 1 when both boundaries are empty, 0 when P + R = 0.
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double tol_frac = 0.008);

// Mean end-point error between two 2 x H x W signals.
template <typename Scalar>
double epe(const FeatureMap<Scalar>& estimated, const FeatureMap<Scalar>& reference)
{
  require_same_shape(estimated, reference, "epe");
  if (estimated.channels != 2)
    throw ShapeMismatch("epe expects 2-channel signals, got " + estimated.shape_string());
  if (estimated.values.cols() == 0)
    return 0.0;
  return double((estimated.values - reference.values).colwise().norm().mean());
}

struct ObjectScore
{
  std::string video;
  int class_id = 0;
  std::vector<double> j;
  std::vector<double> f;
  double j_mean = 0;
  double f_mean = 0;
  double j_recall = 0;
  double f_recall = 0;
};

struct EvalReport
{
  std::vector<ObjectScore> objects;
  double j_mean = 0;
  double f_mean = 0;
  double jf_mean = 0;
  double j_recall = 0;
  double f_recall = 0;
  std::vector<std::string> issues;  // MissingFrame / ClassMismatch / shape problems
  std::string empty_convention = "both-empty J=1 F=1";

  std::string to_json() const;
  std::string to_table() const;
};

struct EvalOptions
{
  double tol_frac = 0.008;
  double recall_threshold = 0.5;
  // Score only the last fraction of the frames (1 = all but the first).
  double last_fraction = 1.0;
};

// One video: frame 0 defines the objects and is not scored. A missing
// prediction (empty LabelImage) is scored as all background.
std::vector<ObjectScore> evaluate_video(const std::string& name,
                                        const std::vector<LabelImage>& predictions,
                                        const std::vector<LabelImage>& groundtruth,
                                        const EvalOptions& opts,
                                        std::vector<std::string>* issues = nullptr);

// Dataset means over objects; recall is the mean fraction of frames above
// the threshold.
EvalReport aggregate(std::vector<ObjectScore> objects, const EvalOptions& opts);

// pred_dir/<video>/<frame> against gt_dir/<video>/<frame>; frames are matched
// by file stem.
EvalReport evaluate_dataset(const std::filesystem::path& pred_dir,
                            const std::filesystem::path& gt_dir,
                            const EvalOptions& opts = {});

} /* namespace hvc */
