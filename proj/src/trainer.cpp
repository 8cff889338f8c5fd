#include "hvc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hvc {

std::int64_t batches_per_epoch(std::int64_t images, int batch_size)
{
  return (images + batch_size - 1) / batch_size;
}

Trainer::Trainer(const RunConfig& cfg, std::vector<ImageBuffer> images)
  : cfg_{cfg}
  , images_{std::move(images)}
  , online_{cfg.model}
  , target_{cfg.model}
  , pseudo_{cfg.model}
  , rng_{cfg.seed}
{
  cfg_.validate();
  if (images_.empty())
    throw Error("training needs at least one image");
  online_.init(rng_);
  pseudo_.init(rng_);
  target_ = online_;
  adam_online_ = AdamState<float>::like(online_.params());
  adam_pseudo_ = AdamState<float>::like(pseudo_.params());
  total_steps_ = std::int64_t(cfg_.train.epochs) *
                 batches_per_epoch(std::int64_t(images_.size()), cfg_.train.batch_size);
  m_ = momentum_at(0, total_steps_, cfg_.train.m0, cfg_.train.schedule);
  order_.resize(images_.size());
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<ImageBuffer> images)
  : Trainer(checkpoint_config(ckpt), std::move(images))
{
  read_store(ckpt, "online", online_.params());
  read_store(ckpt, "target", target_.params());
  read_store(ckpt, "pseudo", pseudo_.params());
  read_store(ckpt, "adam/online/m", adam_online_.first_moment);
  read_store(ckpt, "adam/online/v", adam_online_.second_moment);
  read_store(ckpt, "adam/pseudo/m", adam_pseudo_.first_moment);
  read_store(ckpt, "adam/pseudo/v", adam_pseudo_.second_moment);
  adam_online_.step_count = ckpt.get_scalar<std::int64_t>("adam/online/step");
  adam_pseudo_.step_count = ckpt.get_scalar<std::int64_t>("adam/pseudo/step");

  step_ = ckpt.get_scalar<std::int64_t>("state/step");
  if (ckpt.get_scalar<std::int64_t>("state/total_steps") != total_steps_)
    throw StoreMismatch("checkpoint was written for a different number of training images");
  epoch_ = ckpt.get_scalar<std::int64_t>("state/epoch");
  cursor_ = ckpt.get_scalar<std::int64_t>("state/cursor");
  skipped_ = ckpt.get_scalar<std::int64_t>("state/skipped");
  m_ = ckpt.get_scalar<double>("state/ema_m");
  order_ = ckpt.get_vector<std::int64_t>("state/order");
  if (order_.size() != images_.size())
    throw StoreMismatch("checkpoint image order does not match the corpus size");
  std::istringstream rng_state(ckpt.get_text("state/rng"));
  rng_state >> rng_;
  if (!rng_state)
    throw StoreMismatch("checkpoint RNG state is unreadable");
}

void Trainer::start_epoch()
{
  std::iota(order_.begin(), order_.end(), std::int64_t(0));
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<ViewPair> Trainer::next_batch()
{
  if (cursor_ == 0)
    start_epoch();
  const int fs = cfg_.model.feature_size(cfg_.crop.view_size);
  const std::int64_t end =
      std::min<std::int64_t>(cursor_ + cfg_.train.batch_size, std::int64_t(order_.size()));
  std::vector<ViewPair> batch;
  for (; cursor_ < end; ++cursor_)
  {
    const auto& img = images_[std::size_t(order_[std::size_t(cursor_)])];
    try
    {
      const auto [a, b] = sample_crop_pair(img.height, img.width, rng_, cfg_.crop);
      batch.push_back({resize_crop(img, a), resize_crop(img, b),
                       warp_coords(a, fs, fs, img.height, img.width),
                       warp_coords(b, fs, fs, img.height, img.width)});
    }
    catch (const RetriesExhausted&)
    {
      ++skipped_;
    }
  }
  if (cursor_ >= std::int64_t(order_.size()))
  {
    cursor_ = 0;
    ++epoch_;
  }
  return batch;
}

StepRecord Trainer::step()
{
  if (done())
    throw Error("training is already complete");

  // Everything next_batch touches, so a failed step can be rolled back.
  const Rng rng_before = rng_;
  const auto order_before = order_;
  const auto cursor_before = cursor_, epoch_before = epoch_, skipped_before = skipped_;
  auto rollback = [&] {
    rng_ = rng_before;
    order_ = order_before;
    cursor_ = cursor_before;
    epoch_ = epoch_before;
    skipped_ = skipped_before;
    online_.params().zero_grad();
    pseudo_.params().zero_grad();
  };

  StepRecord rec;
  rec.step = step_;
  rec.m = m_;
  rec.lr = cfg_.train.adam.lr;

  const auto batch = next_batch();
  rec.samples = int(batch.size());
  if (!batch.empty())
  {
    std::vector<ImageBuffer> views1, views2;
    std::vector<GridCoords> coords1, coords2;
    for (const auto& p : batch)
    {
      views1.push_back(p.v1);
      views2.push_back(p.v2);
      coords1.push_back(p.c1);
      coords2.push_back(p.c2);
    }
    const auto x1 = to_feature_map<float>(views1);
    const auto x2 = to_feature_map<float>(views2);

    StepGraph<float> graph;
    LossValue value;
    try
    {
      value = step_objective(online_, target_, pseudo_, x1, x2,
                             positive_masks(coords1, coords2, cfg_.train.radius),
                             positive_masks(coords2, coords1, cfg_.train.radius),
                             cfg_.train.alpha, graph);
      if (!std::isfinite(value.total))
        throw NonFiniteGradient("loss");
      for (const auto* store : {&online_.params(), &pseudo_.params()})
        for (const auto& p : *store)
          if (p.trainable && !p.grad.allFinite())
            throw NonFiniteGradient(p.name);
    }
    catch (const DegenerateBatch& e)
    {
      // Non-finite activations surface first as batch statistics.
      rollback();
      throw NonFiniteGradient(e.what());
    }
    catch (...)
    {
      rollback();
      throw;
    }

    fold_step_stats(online_, pseudo_, graph);
    adam_step(cfg_.train.adam, adam_online_, online_.params());
    adam_step(cfg_.train.adam, adam_pseudo_, pseudo_.params());
    ema_update(target_.params(), online_.params(), m_);

    rec.loss = value.total;
    rec.static_term = value.static_term;
    rec.dynamic_term = value.dynamic_term;
  }

  ++step_;
  m_ = momentum_at(step_, total_steps_, cfg_.train.m0, cfg_.train.schedule);
  return rec;
}

std::vector<StepRecord> Trainer::run(const std::function<void(const StepRecord&)>& on_step)
{
  std::vector<StepRecord> records;
  while (!done())
  {
    records.push_back(step());
    if (on_step)
      on_step(records.back());
  }
  return records;
}

Checkpoint Trainer::checkpoint() const
{
  Checkpoint ckpt;
  const std::string config_text = cfg_.to_json();
  ckpt.config_digest = fnv1a(config_text);
  ckpt.add_text("meta/config", config_text);
  ckpt.add_scalar<std::int64_t>("state/step", step_);
  ckpt.add_scalar<std::int64_t>("state/total_steps", total_steps_);
  ckpt.add_scalar<std::int64_t>("state/epoch", epoch_);
  ckpt.add_scalar<std::int64_t>("state/cursor", cursor_);
  ckpt.add_scalar<std::int64_t>("state/skipped", skipped_);
  ckpt.add_scalar<double>("state/ema_m", m_);
  ckpt.add_vector("state/order", order_);
  std::ostringstream rng_state;
  rng_state << rng_;
  ckpt.add_text("state/rng", rng_state.str());
  ckpt.add_scalar<std::int64_t>("adam/online/step", adam_online_.step_count);
  ckpt.add_scalar<std::int64_t>("adam/pseudo/step", adam_pseudo_.step_count);
  add_store(ckpt, "online", online_.params());
  add_store(ckpt, "target", target_.params());
  add_store(ckpt, "pseudo", pseudo_.params());
  add_store(ckpt, "adam/online/m", adam_online_.first_moment);
  add_store(ckpt, "adam/online/v", adam_online_.second_moment);
  add_store(ckpt, "adam/pseudo/m", adam_pseudo_.first_moment);
  add_store(ckpt, "adam/pseudo/v", adam_pseudo_.second_moment);
  return ckpt;
}

std::vector<ImageBuffer> load_training_images(const RunConfig& cfg)
{
  if (cfg.data.root.empty())
    return synthetic_training_images(cfg.data.corpus);
  const auto dir = std::filesystem::path(cfg.data.root) / "train";
  std::vector<ImageBuffer> out;
  for (const auto& p : list_images(dir))
    out.push_back(read_image(p));
  if (out.empty())
    throw IoError("no training images under " + dir.string());
  return out;
}

std::string loss_log_csv(const std::vector<StepRecord>& records)
{
  std::string out = "step,loss,static_term,dynamic_term,m,lr\n";
  char line[256];
  for (const auto& r : records)
  {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.12g,%.6g\n", (long long)r.step,
                  r.loss, r.static_term, r.dynamic_term, r.m, r.lr);
    out += line;
  }
  return out;
}

RunConfig checkpoint_config(const Checkpoint& ckpt)
{
  const std::string text = ckpt.get_text("meta/config");
  if (fnv1a(text) != ckpt.config_digest)
    throw StoreMismatch("checkpoint config digest does not match its embedded config");
  return RunConfig::from_json(text);
}

EncoderNet<float> load_target_encoder(const Checkpoint& ckpt)
{
  EncoderNet<float> net(checkpoint_config(ckpt).model);
  read_store(ckpt, "target", net.params());
  return net;
}

} /* namespace hvc */
