#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hvc/checkpoint.hpp"
#include "hvc/config.hpp"
#include "hvc/correspondence_loss.hpp"

namespace hvc {

struct StepRecord
{
  std::int64_t step = 0;
  double loss = 0;
  double static_term = 0;
  double dynamic_term = 0;
  double m = 0;
  double lr = 0;
  int samples = 0;
};

// Two views of one image plus the source coordinates of their feature cells.
struct ViewPair
{
  ImageBuffer v1;
  ImageBuffer v2;
  GridCoords c1;
  GridCoords c2;
};

// Gradient of the symmetric step loss for one batch, accumulated into the
// online and pseudo stores. Every encoder pass runs in train mode; batch
// statistics are returned in the caches and are not folded here.
template <typename Scalar>
struct StepGraph
{
  EncoderCache<Scalar> online1;
  EncoderCache<Scalar> online2;
  SymmetricCache<Scalar> loss;
};

template <typename Scalar>
LossValue step_objective(EncoderNet<Scalar>& online, const EncoderNet<Scalar>& target,
                         PseudoDynamicNet<Scalar>& pseudo, const FeatureMap<Scalar>& v1,
                         const FeatureMap<Scalar>& v2, const std::vector<PositiveMask>& masks_12,
                         const std::vector<PositiveMask>& masks_21, double alpha,
                         StepGraph<Scalar>& graph)
{
  const auto o1 = encode_online(online, v1, BnMode::train, &graph.online1);
  const auto o2 = encode_online(online, v2, BnMode::train, &graph.online2);
  const auto t1 = encode_target(target, v1, BnMode::train);
  const auto t2 = encode_target(target, v2, BnMode::train);
  const auto value =
      symmetric_step_loss(pseudo, o1, o2, t1, t2, masks_12, masks_21, alpha, BnMode::train,
                          &graph.loss);
  online.backward(graph.online1, directional_backward(pseudo, graph.loss.first));
  online.backward(graph.online2, directional_backward(pseudo, graph.loss.second));
  return value;
}

// Folds the batch statistics of every train-mode pass into the running
// buffers of the online encoder and the pseudo-dynamic net.
template <typename Scalar>
void fold_step_stats(EncoderNet<Scalar>& online, PseudoDynamicNet<Scalar>& pseudo,
                     const StepGraph<Scalar>& graph)
{
  online.fold_batch_stats(graph.online1, true);
  online.fold_batch_stats(graph.online2, true);
  for (const auto* d : {&graph.loss.first, &graph.loss.second})
  {
    pseudo.fold_batch_stats(d->forward);
    pseudo.fold_batch_stats(d->backward);
  }
}

class Trainer
{
public:
  // Fresh run: parameters are initialised from cfg.seed.
  Trainer(const RunConfig& cfg, std::vector<ImageBuffer> images);

  // Resumes from a checkpoint written by checkpoint(); `images` must be the
  // corpus the run was started on.
  Trainer(const Checkpoint& ckpt, std::vector<ImageBuffer> images);

  bool done() const
  {
    return step_ >= total_steps_;
  }

  // One optimizer step. On NonFiniteGradient the trainer is left exactly at
  // the previous step and the exception propagates.
  StepRecord step();

  // Steps until done(); `on_step` sees every record.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

  Checkpoint checkpoint() const;

  const RunConfig& config() const
  {
    return cfg_;
  }
  const EncoderNet<float>& online() const
  {
    return online_;
  }
  const EncoderNet<float>& target() const
  {
    return target_;
  }
  const PseudoDynamicNet<float>& pseudo() const
  {
    return pseudo_;
  }
  std::int64_t step_count() const
  {
    return step_;
  }
  std::int64_t total_steps() const
  {
    return total_steps_;
  }
  std::int64_t skipped_images() const
  {
    return skipped_;
  }
  double momentum() const
  {
    return m_;
  }

  // Draws the next batch of view pairs; images whose crop sampling runs out
  // of retries are skipped.
  std::vector<ViewPair> next_batch();

private:
  void start_epoch();

  RunConfig cfg_;
  std::vector<ImageBuffer> images_;
  EncoderNet<float> online_;
  EncoderNet<float> target_;
  PseudoDynamicNet<float> pseudo_;
  AdamState<float> adam_online_;
  AdamState<float> adam_pseudo_;
  Rng rng_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
  std::int64_t epoch_ = 0;
  std::int64_t step_ = 0;
  std::int64_t total_steps_ = 0;
  std::int64_t skipped_ = 0;
  double m_ = 0;
};

std::int64_t batches_per_epoch(std::int64_t images, int batch_size);

// Training images: <root>/train when data.root is set, otherwise the
// in-memory synthetic corpus.
std::vector<ImageBuffer> load_training_images(const RunConfig& cfg);

// Header plus one line per record: step,loss,static_term,dynamic_term,m,lr
std::string loss_log_csv(const std::vector<StepRecord>& records);

RunConfig checkpoint_config(const Checkpoint& ckpt);

// Target encoder of a training checkpoint, ready for eval-mode inference.
EncoderNet<float> load_target_encoder(const Checkpoint& ckpt);

} /* namespace hvc */
