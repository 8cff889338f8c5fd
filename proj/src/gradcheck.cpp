#include "hvc/gradcheck.hpp"

#include <functional>
#include <optional>

#include "hvc/trainer.hpp"

namespace hvc {

namespace {

using Map = FeatureMap<double>;
using VecD = Eigen::VectorXd;

constexpr int max_redraws = 200;

Map random_map(Rng& rng, int b, int c, int h, int w)
{
  std::normal_distribution<double> n(0.0, 1.0);
  Map x(b, c, h, w);
  for (Eigen::Index i = 0; i < x.values.size(); ++i)
    x.values.data()[i] = n(rng);
  return x;
}

void randomize(Rng& rng, ParameterStore<double>& store, double scale)
{
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : store)
    for (auto& v : p.value)
      v = n(rng);
}

// Central differences of f with respect to each listed buffer, concatenated.
VecD numeric_gradient(const std::function<double()>& f, const std::vector<VecD*>& buffers,
                      double h)
{
  Eigen::Index total = 0;
  for (auto* b : buffers)
    total += b->size();
  VecD g(total);
  Eigen::Index k = 0;
  for (auto* b : buffers)
    for (Eigen::Index i = 0; i < b->size(); ++i)
    {
      const double keep = (*b)(i);
      (*b)(i) = keep + h;
      const double up = f();
      (*b)(i) = keep - h;
      const double down = f();
      (*b)(i) = keep;
      g(k++) = (up - down) / (2 * h);
    }
  return g;
}

double rel_error(const VecD& a, const VecD& b)
{
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

VecD concat(const std::vector<const VecD*>& parts)
{
  Eigen::Index n = 0;
  for (auto* p : parts)
    n += p->size();
  VecD out(n);
  Eigen::Index k = 0;
  for (auto* p : parts)
  {
    out.segment(k, p->size()) = *p;
    k += p->size();
  }
  return out;
}

VecD flat(const Map& m)
{
  return Eigen::Map<const VecD>(m.values.data(), m.values.size());
}

// Views the storage of a map as a vector so it can be perturbed in place.
struct MapBuffer
{
  Map& map;
  VecD buf;
  explicit MapBuffer(Map& m)
    : map{m}
    , buf{flat(m)}
  {
  }
  void sync()
  {
    map.values = Eigen::Map<const Matrix<double>>(buf.data(), map.values.rows(),
                                                  map.values.cols());
  }
};

std::vector<VecD*> trainable_values(ParameterStore<double>& store)
{
  std::vector<VecD*> out;
  for (auto& p : store)
    if (p.trainable)
      out.push_back(&p.value);
  return out;
}

VecD trainable_grads(const ParameterStore<double>& store)
{
  std::vector<const VecD*> parts;
  for (const auto& p : store)
    if (p.trainable)
      parts.push_back(&p.grad);
  return concat(parts);
}

// A single trial returns its relative error, or nothing when it must be
// redrawn.
using Trial = std::function<std::optional<double>(Rng&)>;

GradCheckResult run_trials(const std::string& name, const Trial& trial,
                           const GradCheckOptions& opts, double tolerance, Rng& rng)
{
  GradCheckResult r{name, 0, 0, 0.0, tolerance};
  while (r.trials < opts.trials)
  {
    if (r.redrawn > max_redraws)
    {
      r.max_rel_error = std::numeric_limits<double>::infinity();
      break;
    }
    const auto err = trial(rng);
    if (!err)
    {
      ++r.redrawn;
      continue;
    }
    ++r.trials;
    r.max_rel_error = std::max(r.max_rel_error, *err);
  }
  return r;
}

std::optional<double> conv_trial(Rng& rng, int in, int out, int k, int stride, double h)
{
  ParameterStore<double> store;
  const auto conv = Conv2d<double>::create(store, "conv", in, out, k, stride);
  randomize(rng, store, 0.5);
  Map x = random_map(rng, 2, in, 5, 6);
  const Map probe = random_map(rng, 2, out, conv.out_size(5), conv.out_size(6));

  Conv2dCache<double> cache;
  conv.forward(store, x, &cache);
  const VecD dx = flat(conv.backward(store, cache, probe));
  const VecD analytic = concat({&dx, &store[0].grad, &store[1].grad});

  MapBuffer xb(x);
  const auto f = [&] {
    xb.sync();
    return conv.forward(store, x).values.cwiseProduct(probe.values).sum();
  };
  auto bufs = trainable_values(store);
  bufs.insert(bufs.begin(), &xb.buf);
  return rel_error(analytic, numeric_gradient(f, bufs, h));
}

std::optional<double> bn_trial(Rng& rng, BnMode mode, double h)
{
  ParameterStore<double> store;
  const auto bn = BatchNorm<double>::create(store, "bn", 3);
  randomize(rng, store, 0.5);
  store[bn.running_var].value = store[bn.running_var].value.cwiseAbs().array() + 0.5;
  Map x = random_map(rng, 2, 3, 3, 4);
  const Map probe = random_map(rng, 2, 3, 3, 4);

  BatchNormCache<double> cache;
  bn.forward(store, x, mode, &cache);
  const VecD dx = flat(bn.backward(store, cache, probe));
  const VecD analytic = concat({&dx, &store[bn.gamma].grad, &store[bn.beta].grad});

  MapBuffer xb(x);
  const auto f = [&] {
    xb.sync();
    return bn.forward(store, x, mode).values.cwiseProduct(probe.values).sum();
  };
  return rel_error(analytic, numeric_gradient(f, {&xb.buf, &store[bn.gamma].value,
                                                  &store[bn.beta].value},
                                              h));
}

std::optional<double> relu_trial(Rng& rng, double h, double margin)
{
  Map x = random_map(rng, 2, 3, 3, 3);
  const Map probe = random_map(rng, 2, 3, 3, 3);
  ReluCache<double> cache;
  relu_forward(x, &cache);
  if (relu_margin(cache) < margin)
    return std::nullopt;
  const VecD analytic = flat(relu_backward(cache, probe));
  MapBuffer xb(x);
  const auto f = [&] {
    xb.sync();
    return relu_forward(x).values.cwiseProduct(probe.values).sum();
  };
  return rel_error(analytic, numeric_gradient(f, {&xb.buf}, h));
}

std::optional<double> l2norm_trial(Rng& rng, double h)
{
  Map x = random_map(rng, 2, 4, 3, 3);
  const Map probe = random_map(rng, 2, 4, 3, 3);
  L2NormCache<double> cache;
  l2norm_forward(x, &cache);
  const VecD analytic = flat(l2norm_backward(cache, probe));
  MapBuffer xb(x);
  const auto f = [&] {
    xb.sync();
    return l2norm_forward(x).values.cwiseProduct(probe.values).sum();
  };
  return rel_error(analytic, numeric_gradient(f, {&xb.buf}, h));
}

std::optional<double> pseudo_trial(Rng& rng, double h, double margin)
{
  PseudoDynamicNet<double> net(4, 5);
  net.init(rng);
  randomize(rng, net.params(), 0.5);
  Map fa = l2norm_forward(random_map(rng, 2, 4, 3, 3));
  Map fb = l2norm_forward(random_map(rng, 2, 4, 3, 3));
  const Map probe = random_map(rng, 2, 2, 3, 3);

  PseudoDynamicCache<double> cache;
  net.forward(fa, fb, BnMode::train, &cache);
  if (relu_margin(cache) < margin)
    return std::nullopt;
  const auto [da, db] = net.backward(cache, probe);
  const VecD va = flat(da), vb = flat(db), vp = trainable_grads(net.params());
  const VecD analytic = concat({&va, &vb, &vp});

  MapBuffer ab(fa), bb(fb);
  const auto f = [&] {
    ab.sync();
    bb.sync();
    return net.forward(fa, fb, BnMode::train).values.cwiseProduct(probe.values).sum();
  };
  auto bufs = trainable_values(net.params());
  bufs.insert(bufs.begin(), {&ab.buf, &bb.buf});
  return rel_error(analytic, numeric_gradient(f, bufs, h));
}

// Sign pattern of every ReLU input touched by one step objective.
std::vector<bool> activation_pattern(const EncoderCache<double>& a, const EncoderCache<double>& b,
                                     const SymmetricCache<double>& loss)
{
  std::vector<bool> out;
  const auto add = [&](const ReluCache<double>& c) {
    for (Eigen::Index i = 0; i < c.input.size(); ++i)
      out.push_back(c.input.data()[i] > 0);
  };
  for (const auto* e : {&a, &b})
  {
    for (const auto& blk : e->backbone)
      add(blk.relu);
    for (const auto* head : {&e->projector, &e->predictor})
    {
      add(head->first.relu);
      add(head->second.relu);
    }
  }
  for (const auto* d : {&loss.first, &loss.second})
  {
    add(d->forward.hidden.relu);
    add(d->backward.hidden.relu);
  }
  return out;
}

ModelConfig toy_model()
{
  ModelConfig m;
  m.backbone_channels = {4, 5};
  m.projector_hidden = 6;
  m.out_channels = 6;
  m.pseudo_hidden = 5;
  return m;
}

std::optional<double> end_to_end_trial(Rng& rng, double h, double margin)
{
  const ModelConfig cfg = toy_model();
  EncoderNet<double> online(cfg);
  online.init(rng);
  EncoderNet<double> target = online;
  randomize(rng, target.params(), 0.3);
  for (auto* store : {&online.params(), &target.params()})
    for (auto& p : *store)
      if (!p.trainable)
        p.value = p.value.cwiseAbs().array() + 0.5;
  PseudoDynamicNet<double> pseudo(cfg);
  pseudo.init(rng);

  const int batch = 2, view = 12;
  const int fs = cfg.feature_size(view);
  const Map v1 = random_map(rng, batch, 3, view, view);
  const Map v2 = random_map(rng, batch, 3, view, view);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GridCoords> c1, c2;
  for (int b = 0; b < batch; ++b)
    for (auto* c : {&c1, &c2})
    {
      GridCoords g{Eigen::MatrixXd(fs, fs), Eigen::MatrixXd(fs, fs)};
      for (Eigen::Index i = 0; i < g.xs.size(); ++i)
      {
        g.xs.data()[i] = u(rng);
        g.ys.data()[i] = u(rng);
      }
      c->push_back(g);
    }
  const auto m12 = positive_masks(c1, c2, 0.4);
  const auto m21 = positive_masks(c2, c1, 0.4);
  const double alpha = 1.0;

  StepGraph<double> graph;
  step_objective(online, target, pseudo, v1, v2, m12, m21, alpha, graph);
  for (const auto* c : {&graph.online1, &graph.online2})
    if (relu_margin(*c, true) < margin)
      return std::nullopt;
  for (const auto* d : {&graph.loss.first, &graph.loss.second})
    if (relu_margin(d->forward) < margin || relu_margin(d->backward) < margin)
      return std::nullopt;

  const VecD go = trainable_grads(online.params());
  const VecD gp = trainable_grads(pseudo.params());
  const VecD analytic = concat({&go, &gp});

  // A probe that moves any ReLU across its kink makes the difference
  // quotient meaningless, so such trials are redrawn. Target-branch ReLUs do
  // not depend on the probed parameters.
  const auto pattern =
      activation_pattern(graph.online1, graph.online2, graph.loss);
  bool crossed = false;
  const auto f = [&] {
    EncoderCache<double> e1, e2;
    SymmetricCache<double> sc;
    const auto o1 = encode_online(online, v1, BnMode::train, &e1);
    const auto o2 = encode_online(online, v2, BnMode::train, &e2);
    const auto t1 = encode_target(target, v1);
    const auto t2 = encode_target(target, v2);
    const double v =
        symmetric_step_loss(pseudo, o1, o2, t1, t2, m12, m21, alpha, BnMode::train, &sc).total;
    crossed = crossed || activation_pattern(e1, e2, sc) != pattern;
    return v;
  };
  auto bufs = trainable_values(online.params());
  const auto pbufs = trainable_values(pseudo.params());
  bufs.insert(bufs.end(), pbufs.begin(), pbufs.end());
  const VecD numeric = numeric_gradient(f, bufs, h);
  if (crossed)
    return std::nullopt;
  return rel_error(analytic, numeric);
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts)
{
  Rng rng(opts.seed);
  const double h = opts.step;
  const double tol = opts.layer_tolerance;
  std::vector<GradCheckResult> out;
  out.push_back(run_trials(
      "conv3x3_stride1", [&](Rng& r) { return conv_trial(r, 3, 4, 3, 1, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "conv3x3_stride2", [&](Rng& r) { return conv_trial(r, 3, 4, 3, 2, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "conv1x1", [&](Rng& r) { return conv_trial(r, 5, 3, 1, 1, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "batchnorm_train", [&](Rng& r) { return bn_trial(r, BnMode::train, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "batchnorm_eval", [&](Rng& r) { return bn_trial(r, BnMode::eval, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "relu", [&](Rng& r) { return relu_trial(r, h, opts.relu_margin); }, opts, tol, rng));
  out.push_back(run_trials(
      "l2norm", [&](Rng& r) { return l2norm_trial(r, h); }, opts, tol, rng));
  out.push_back(run_trials(
      "pseudo_dynamic", [&](Rng& r) { return pseudo_trial(r, h, opts.relu_margin); }, opts, tol,
      rng));
  out.push_back(run_trials(
      "symmetric_hybrid_loss",
      [&](Rng& r) { return end_to_end_trial(r, opts.end_to_end_step, opts.relu_margin); }, opts,
      opts.end_to_end_tolerance, rng));
  return out;
}

} /* namespace hvc */
