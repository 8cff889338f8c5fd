#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hvc/layers.hpp"

namespace hvc {

struct ModelConfig
{
  int in_channels = 3;
  // One conv(3x3, stride) -> BN -> ReLU block per entry.
  std::vector<int> backbone_channels{32, 64, 64};
  int backbone_stride = 2;
  int projector_hidden = 256;
  int out_channels = 256;
  // Hidden width of the pseudo-dynamic generator; 0 means projector_hidden.
  int pseudo_hidden = 0;

  int pseudo_width() const
  {
    return pseudo_hidden > 0 ? pseudo_hidden : projector_hidden;
  }

  // Spatial size of the feature grid for a square input of `view` pixels.
  int feature_size(int view) const
  {
    int n = view;
    for (std::size_t i = 0; i < backbone_channels.size(); ++i)
      n = (n + 2 - 3) / backbone_stride + 1;
    return n;
  }
};

// ---------------------------------------------------------------------------
// conv -> BN -> ReLU
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ConvBnReluCache
{
  Conv2dCache<Scalar> conv;
  BatchNormCache<Scalar> bn;
  ReluCache<Scalar> relu;
};

template <typename Scalar>
struct ConvBnRelu
{
  Conv2d<Scalar> conv;
  BatchNorm<Scalar> bn;

  static ConvBnRelu create(ParameterStore<Scalar>& store, const std::string& prefix,
                           int in_ch, int out_ch, int k, int stride)
  {
    return {Conv2d<Scalar>::create(store, prefix + ".conv", in_ch, out_ch, k, stride),
            BatchNorm<Scalar>::create(store, prefix + ".bn", out_ch)};
  }

  FeatureMap<Scalar> forward(const ParameterStore<Scalar>& store,
                             const FeatureMap<Scalar>& x, BnMode mode,
                             ConvBnReluCache<Scalar>* cache) const
  {
    auto h = conv.forward(store, x, cache ? &cache->conv : nullptr);
    h = bn.forward(store, h, mode, cache ? &cache->bn : nullptr);
    return relu_forward(h, cache ? &cache->relu : nullptr);
  }

  FeatureMap<Scalar> backward(ParameterStore<Scalar>& store,
                              const ConvBnReluCache<Scalar>& cache,
                              const FeatureMap<Scalar>& dy, int in_begin = 0,
                              int in_count = -1) const
  {
    auto d = relu_backward(cache.relu, dy);
    d = bn.backward(store, cache.bn, d);
    return conv.backward(store, cache.conv, d, in_begin, in_count);
  }
};

// ---------------------------------------------------------------------------
// Projection head: three 1x1 convs with BN + ReLU between neighbours.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ProjectionCache
{
  ConvBnReluCache<Scalar> first;
  ConvBnReluCache<Scalar> second;
  Conv2dCache<Scalar> last;
};

template <typename Scalar>
struct ProjectionHead
{
  ConvBnRelu<Scalar> first;
  ConvBnRelu<Scalar> second;
  Conv2d<Scalar> last;

  static ProjectionHead create(ParameterStore<Scalar>& store, const std::string& prefix,
                               int in_ch, int hidden, int out_ch)
  {
    return {ConvBnRelu<Scalar>::create(store, prefix + ".0", in_ch, hidden, 1, 1),
            ConvBnRelu<Scalar>::create(store, prefix + ".1", hidden, hidden, 1, 1),
            Conv2d<Scalar>::create(store, prefix + ".2.conv", hidden, out_ch, 1, 1)};
  }

  FeatureMap<Scalar> forward(const ParameterStore<Scalar>& store,
                             const FeatureMap<Scalar>& x, BnMode mode,
                             ProjectionCache<Scalar>* cache) const
  {
    auto h = first.forward(store, x, mode, cache ? &cache->first : nullptr);
    h = second.forward(store, h, mode, cache ? &cache->second : nullptr);
    return last.forward(store, h, cache ? &cache->last : nullptr);
  }

  FeatureMap<Scalar> backward(ParameterStore<Scalar>& store,
                              const ProjectionCache<Scalar>& cache,
                              const FeatureMap<Scalar>& dy) const
  {
    auto d = last.backward(store, cache.last, dy);
    d = second.backward(store, cache.second, d);
    return first.backward(store, cache.first, d);
  }

  template <typename Fn>
  void for_each_bn(Fn&& fn) const
  {
    fn(first.bn);
    fn(second.bn);
  }
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

template <typename Scalar>
struct EncoderCache
{
  std::vector<ConvBnReluCache<Scalar>> backbone;
  ProjectionCache<Scalar> projector;
  ProjectionCache<Scalar> predictor;
  L2NormCache<Scalar> norm;
};

// Backbone -> projector (-> predictor on the online branch) -> l2norm.
//
// Online and target encoders share this type and therefore the same
// parameter layout; the target simply never runs its predictor.
template <typename Scalar>
class EncoderNet
{
public:
  using scalar_type = Scalar;

  EncoderNet() = default;

  explicit EncoderNet(const ModelConfig& cfg)
    : config_{cfg}
  {
    int ch = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.backbone_channels.size(); ++i)
    {
      const int out = cfg.backbone_channels[i];
      backbone_.push_back(ConvBnRelu<Scalar>::create(
          store_, "backbone." + std::to_string(i), ch, out, 3, cfg.backbone_stride));
      ch = out;
    }
    projector_ = ProjectionHead<Scalar>::create(store_, "projector", ch,
                                                cfg.projector_hidden, cfg.out_channels);
    predictor_ = ProjectionHead<Scalar>::create(store_, "predictor", cfg.out_channels,
                                                cfg.projector_hidden, cfg.out_channels);
  }

  template <typename Rng>
  void init(Rng& rng)
  {
    for (auto& b : backbone_)
      b.conv.init(store_, rng);
    for (auto* head : {&projector_, &predictor_})
    {
      head->first.conv.init(store_, rng);
      head->second.conv.init(store_, rng);
      head->last.init(store_, rng);
      head->for_each_bn([&](const BatchNorm<Scalar>& bn) { bn.reset(store_); });
    }
    for (auto& b : backbone_)
      b.bn.reset(store_);
  }

  const ModelConfig& config() const
  {
    return config_;
  }

  ParameterStore<Scalar>& params()
  {
    return store_;
  }

  const ParameterStore<Scalar>& params() const
  {
    return store_;
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& view, bool with_predictor,
                             BnMode mode, EncoderCache<Scalar>* cache) const
  {
    if (cache)
      cache->backbone.resize(backbone_.size());
    FeatureMap<Scalar> h = view;
    for (std::size_t i = 0; i < backbone_.size(); ++i)
      h = backbone_[i].forward(store_, h, mode, cache ? &cache->backbone[i] : nullptr);
    h = projector_.forward(store_, h, mode, cache ? &cache->projector : nullptr);
    if (with_predictor)
      h = predictor_.forward(store_, h, mode, cache ? &cache->predictor : nullptr);
    return l2norm_forward(h, cache ? &cache->norm : nullptr);
  }

  // Accumulates parameter gradients of an online forward; returns the
  // gradient with respect to the input view.
  FeatureMap<Scalar> backward(const EncoderCache<Scalar>& cache,
                              const FeatureMap<Scalar>& d_out)
  {
    auto d = l2norm_backward(cache.norm, d_out);
    d = predictor_.backward(store_, cache.predictor, d);
    d = projector_.backward(store_, cache.projector, d);
    for (std::size_t i = backbone_.size(); i-- > 0;)
      d = backbone_[i].backward(store_, cache.backbone[i], d);
    return d;
  }

  // Folds the batch statistics recorded in `cache` into the running buffers.
  void fold_batch_stats(const EncoderCache<Scalar>& cache, bool with_predictor)
  {
    for (std::size_t i = 0; i < backbone_.size(); ++i)
      backbone_[i].bn.update_running(store_, cache.backbone[i].bn);
    projector_.first.bn.update_running(store_, cache.projector.first.bn);
    projector_.second.bn.update_running(store_, cache.projector.second.bn);
    if (with_predictor)
    {
      predictor_.first.bn.update_running(store_, cache.predictor.first.bn);
      predictor_.second.bn.update_running(store_, cache.predictor.second.bn);
    }
  }

  template <typename Other>
  EncoderNet<Other> cast() const
  {
    EncoderNet<Other> out(config_);
    auto converted = store_.template cast<Other>();
    for (std::size_t i = 0; i < out.params().size(); ++i)
      out.params()[i].value = converted[i].value;
    return out;
  }

private:
  ModelConfig config_;
  ParameterStore<Scalar> store_;
  std::vector<ConvBnRelu<Scalar>> backbone_;
  ProjectionHead<Scalar> projector_;
  ProjectionHead<Scalar> predictor_;
};

// Online branch: backbone -> projector -> predictor -> l2norm. Passing a
// cache records everything needed by EncoderNet::backward.
template <typename Scalar>
FeatureMap<Scalar> encode_online(const EncoderNet<Scalar>& net, const FeatureMap<Scalar>& view,
                                 BnMode mode = BnMode::train,
                                 EncoderCache<Scalar>* cache = nullptr)
{
  return net.forward(view, true, mode, cache);
}

// Target branch: backbone -> projector -> l2norm. There is no cache
// argument, so the result can never carry a gradient path.
template <typename Scalar>
FeatureMap<Scalar> encode_target(const EncoderNet<Scalar>& net, const FeatureMap<Scalar>& view,
                                 BnMode mode = BnMode::train)
{
  return net.forward(view, false, mode, nullptr);
}

// ---------------------------------------------------------------------------
// Pseudo-dynamic generator
// ---------------------------------------------------------------------------

template <typename Scalar>
struct PseudoDynamicCache
{
  int channels = 0;
  ConvBnReluCache<Scalar> hidden;
  Conv2dCache<Scalar> out;
};

enum class InputGrad
{
  both,
  first,
  second
};

// concat(Fa, Fb) -> conv3x3 -> BN -> ReLU -> conv3x3 -> 2 x H x W.
// The argument order is the direction of the signal.
template <typename Scalar>
class PseudoDynamicNet
{
public:
  PseudoDynamicNet() = default;

  PseudoDynamicNet(int feature_channels, int hidden)
  {
    hidden_ = ConvBnRelu<Scalar>::create(store_, "pseudo.0", 2 * feature_channels, hidden, 3, 1);
    out_ = Conv2d<Scalar>::create(store_, "pseudo.1.conv", hidden, 2, 3, 1);
  }

  explicit PseudoDynamicNet(const ModelConfig& cfg)
    : PseudoDynamicNet(cfg.out_channels, cfg.pseudo_width())
  {
  }

  template <typename Rng>
  void init(Rng& rng)
  {
    hidden_.conv.init(store_, rng);
    hidden_.bn.reset(store_);
    out_.init(store_, rng);
  }

  ParameterStore<Scalar>& params()
  {
    return store_;
  }

  const ParameterStore<Scalar>& params() const
  {
    return store_;
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& fa, const FeatureMap<Scalar>& fb,
                             BnMode mode, PseudoDynamicCache<Scalar>* cache = nullptr) const
  {
    require_same_shape(fa, fb, "pseudo_dynamic");
    if (cache)
      cache->channels = fa.channels;
    auto h = hidden_.forward(store_, concat_channels(fa, fb), mode,
                             cache ? &cache->hidden : nullptr);
    return out_.forward(store_, h, cache ? &cache->out : nullptr);
  }

  // Returns the gradients with respect to (Fa, Fb); an input excluded by
  // `needs` comes back empty.
  std::pair<FeatureMap<Scalar>, FeatureMap<Scalar>> backward(
      const PseudoDynamicCache<Scalar>& cache, const FeatureMap<Scalar>& d_signal,
      InputGrad needs = InputGrad::both)
  {
    auto d = out_.backward(store_, cache.out, d_signal);
    const int c = cache.channels;
    switch (needs)
    {
      case InputGrad::first:
        return {hidden_.backward(store_, cache.hidden, d, 0, c), {}};
      case InputGrad::second:
        return {{}, hidden_.backward(store_, cache.hidden, d, c, c)};
      default:
        break;
    }
    d = hidden_.backward(store_, cache.hidden, d);
    return {slice_channels(d, 0, c), slice_channels(d, c, c)};
  }

  void fold_batch_stats(const PseudoDynamicCache<Scalar>& cache)
  {
    hidden_.bn.update_running(store_, cache.hidden.bn);
  }

private:
  ParameterStore<Scalar> store_;
  ConvBnRelu<Scalar> hidden_;
  Conv2d<Scalar> out_;
};

template <typename Scalar>
FeatureMap<Scalar> pseudo_dynamic(const PseudoDynamicNet<Scalar>& net,
                                  const FeatureMap<Scalar>& fa, const FeatureMap<Scalar>& fb,
                                  BnMode mode = BnMode::train,
                                  PseudoDynamicCache<Scalar>* cache = nullptr)
{
  return net.forward(fa, fb, mode, cache);
}

// Smallest |pre-activation| over every ReLU touched by a forward pass.
template <typename Scalar>
Scalar relu_margin(const EncoderCache<Scalar>& c, bool with_predictor)
{
  Scalar m = std::numeric_limits<Scalar>::infinity();
  for (const auto& b : c.backbone)
    m = std::min(m, relu_margin(b.relu));
  m = std::min({m, relu_margin(c.projector.first.relu), relu_margin(c.projector.second.relu)});
  if (with_predictor)
    m = std::min({m, relu_margin(c.predictor.first.relu), relu_margin(c.predictor.second.relu)});
  return m;
}

template <typename Scalar>
Scalar relu_margin(const PseudoDynamicCache<Scalar>& c)
{
  return relu_margin(c.hidden.relu);
}

} /* namespace hvc */
