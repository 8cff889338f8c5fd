#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "hvc/parameter_store.hpp"

namespace hvc {

enum class MomentumSchedule
{
  cosine,
  linear,
  constant,
};

// m = 1 - (1 - m0) * (cos(pi * step / total) + 1) / 2
inline double momentum_at(std::int64_t step, std::int64_t total_steps, double m0,
                          MomentumSchedule schedule = MomentumSchedule::cosine)
{
  if (total_steps <= 0 || schedule == MomentumSchedule::constant)
    return m0;
  const double t = std::clamp(double(step) / double(total_steps), 0.0, 1.0);
  if (schedule == MomentumSchedule::linear)
    return m0 + (1.0 - m0) * t;
  return 1.0 - (1.0 - m0) * (std::cos(std::numbers::pi * t) + 1.0) / 2.0;
}

// target <- m * target + (1 - m) * online for every tensor, buffers included.
template <typename Scalar>
void ema_update(ParameterStore<Scalar>& target, const ParameterStore<Scalar>& online, double m)
{
  if (!(m >= 0.0 && m <= 1.0))
    throw Error("ema_update: momentum must lie in [0, 1]");
  target.require_same_layout(online);
  const Scalar keep = Scalar(m);
  const Scalar take = Scalar(1.0 - m);
  for (std::size_t i = 0; i < target.size(); ++i)
  {
    if (m == 1.0)
      continue;
    if (m == 0.0)
      target[i].value = online[i].value;
    else
      target[i].value = keep * target[i].value + take * online[i].value;
  }
}

struct AdamConfig
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename Scalar>
struct AdamState
{
  ParameterStore<Scalar> first_moment;
  ParameterStore<Scalar> second_moment;
  std::int64_t step_count = 0;

  static AdamState like(const ParameterStore<Scalar>& params)
  {
    AdamState s;
    for (const auto& p : params)
    {
      s.first_moment.add(p.name, p.shape, p.trainable);
      s.second_moment.add(p.name, p.shape, p.trainable);
    }
    return s;
  }
};

// Bias-corrected adaptive-moment update of every trainable tensor, then
// zeroes all gradients. A non-finite gradient aborts before anything moves.
template <typename Scalar>
void adam_step(const AdamConfig& cfg, AdamState<Scalar>& state, ParameterStore<Scalar>& params)
{
  state.first_moment.require_same_layout(params);
  for (const auto& p : params)
    if (p.trainable && !p.grad.allFinite())
      throw NonFiniteGradient(p.name);

  ++state.step_count;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step_count));
  const Scalar b1 = Scalar(cfg.beta1);
  const Scalar b2 = Scalar(cfg.beta2);
  const Scalar step_size = Scalar(cfg.lr / bc1);
  const Scalar inv_sqrt_bc2 = Scalar(1.0 / std::sqrt(bc2));
  const Scalar eps = Scalar(cfg.eps);

  for (std::size_t i = 0; i < params.size(); ++i)
  {
    auto& p = params[i];
    if (!p.trainable)
      continue;
    Vector<Scalar> g = p.grad;
    if (cfg.weight_decay != 0.0)
      g += Scalar(cfg.weight_decay) * p.value;
    auto& m = state.first_moment[i].value;
    auto& v = state.second_moment[i].value;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    p.value.array() -=
        step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
  params.zero_grad();
}

} /* namespace hvc */
