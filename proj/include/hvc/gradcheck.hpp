#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hvc {

struct GradCheckOptions
{
  int trials = 20;
  double step = 1e-5;
  // The normalized 2-channel signals make the full loss strongly curved, so
  // the composed check needs a finer step to keep truncation error down.
  double end_to_end_step = 1e-6;
  // Trials whose ReLU inputs come closer than this to the kink are redrawn.
  double relu_margin = 1e-3;
  double layer_tolerance = 1e-6;
  double end_to_end_tolerance = 1e-5;
  std::uint64_t seed = 0;
};

struct GradCheckResult
{
  std::string name;
  int trials = 0;
  int redrawn = 0;
  double max_rel_error = 0;
  double tolerance = 0;

  bool passed() const
  {
    return trials > 0 && max_rel_error < tolerance;
  }
};

// Central-difference checks in double precision: conv (3x3 stride 1 and 2,
// 1x1), batch norm (train and eval), ReLU, l2norm, the pseudo-dynamic
// generator, and the symmetric step loss against every online and pseudo
// parameter of a toy network.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts = {});

} /* namespace hvc */
