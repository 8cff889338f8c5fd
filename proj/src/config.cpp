#include "hvc/config.hpp"

#include <set>

#include <json.hpp>

namespace hvc {

namespace {

using json = nlohmann::ordered_json;

// Reads one JSON object and remembers which keys were consumed so leftovers
// can be reported.
class Section
{
public:
  Section(const json& root, const std::string& name)
    : name_{name}
  {
    if (name.empty())
      obj_ = &root;
    else if (root.contains(name))
    {
      obj_ = &root.at(name);
      if (!obj_->is_object())
        throw ConfigError("config key '" + name + "' must be an object");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out)
  {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key))
      return;
    try
    {
      out = obj_->at(key).get<T>();
    }
    catch (const json::exception&)
    {
      throw ConfigError("config key '" + path(key) + "' has the wrong type");
    }
  }

  void skip(const std::string& key)
  {
    seen_.insert(key);
  }

  void finish() const
  {
    if (!obj_)
      return;
    for (const auto& [key, value] : obj_->items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + path(key) + "'");
  }

private:
  std::string path(const std::string& key) const
  {
    return name_.empty() ? key : name_ + "." + key;
  }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what)
{
  if (!ok)
    throw ConfigError("invalid config: " + what);
}

}  // namespace

std::string to_string(MomentumSchedule s)
{
  switch (s)
  {
    case MomentumSchedule::cosine: return "cosine";
    case MomentumSchedule::linear: return "linear";
    case MomentumSchedule::constant: return "constant";
  }
  return "cosine";
}

MomentumSchedule parse_schedule(const std::string& name)
{
  if (name == "cosine")
    return MomentumSchedule::cosine;
  if (name == "linear")
    return MomentumSchedule::linear;
  if (name == "constant")
    return MomentumSchedule::constant;
  throw ConfigError("train.momentum_schedule must be cosine, linear or constant, got '" + name +
                    "'");
}

void RunConfig::validate() const
{
  const auto& c = data.corpus;
  require(c.train_images >= 1, "data.train_images >= 1");
  require(c.eval_videos >= 0, "data.eval_videos >= 0");
  require(c.frames >= 2, "data.frames >= 2");
  require(c.canvas >= crop.min_side, "data.canvas >= crop.min_side");
  require(c.min_objects >= 0 && c.max_objects >= c.min_objects, "data object counts");
  require(c.min_size > 0 && c.max_size >= c.min_size && c.max_size <= c.canvas,
          "data.min_size / max_size");
  require(c.max_speed >= 0, "data.max_speed >= 0");

  require(crop.scale_min > 0 && crop.scale_max <= 1 && crop.scale_min <= crop.scale_max,
          "crop.scale range within (0, 1]");
  require(crop.ratio_min > 0 && crop.ratio_min <= crop.ratio_max, "crop.ratio range");
  require(crop.min_overlap >= 0 && crop.min_overlap <= 1, "crop.min_overlap in [0, 1]");
  require(crop.max_retries >= 1, "crop.max_retries >= 1");
  require(crop.view_size >= 8, "crop.view_size >= 8");
  require(crop.min_side >= 1, "crop.min_side >= 1");

  require(model.in_channels == 3, "model.in_channels == 3");
  require(!model.backbone_channels.empty(), "model.backbone_channels non-empty");
  for (int ch : model.backbone_channels)
    require(ch >= 1, "model.backbone_channels entries >= 1");
  require(model.backbone_stride >= 1, "model.backbone_stride >= 1");
  require(model.projector_hidden >= 1 && model.out_channels >= 1, "model widths >= 1");
  require(model.pseudo_hidden >= 0, "model.pseudo_hidden >= 0");
  require(model.feature_size(crop.view_size) >= 1, "feature grid non-empty");

  require(train.batch_size >= 1, "train.batch_size >= 1");
  require(train.epochs >= 1, "train.epochs >= 1");
  require(train.radius > 0 && train.radius < 1, "train.radius in (0, 1)");
  require(train.alpha >= 0, "train.alpha >= 0");
  require(train.m0 >= 0 && train.m0 <= 1, "train.m0 in [0, 1]");
  require(train.adam.lr >= 0, "train.lr >= 0");
  require(train.adam.beta1 >= 0 && train.adam.beta1 < 1, "train.beta1 in [0, 1)");
  require(train.adam.beta2 >= 0 && train.adam.beta2 < 1, "train.beta2 in [0, 1)");
  require(train.adam.eps > 0, "train.eps > 0");
  require(train.adam.weight_decay >= 0, "train.weight_decay >= 0");

  require(propagation.n_context >= 0, "propagation.n_context >= 0");
  require(propagation.top_k >= 1, "propagation.top_k >= 1");
  require(propagation.temperature > 0, "propagation.temperature > 0");
  require(propagation.locality_radius >= 0, "propagation.locality_radius >= 0");
  require(propagation.input_scale > 0, "propagation.input_scale > 0");

  require(metrics.tol_frac >= 0, "metrics.tol_frac >= 0");
  require(metrics.last_fraction > 0 && metrics.last_fraction <= 1,
          "metrics.last_fraction in (0, 1]");
}

std::string RunConfig::to_json() const
{
  const auto& c = data.corpus;
  json j;
  j["seed"] = seed;
  j["data"] = {{"root", data.root},
               {"seed", c.seed},
               {"train_images", c.train_images},
               {"eval_videos", c.eval_videos},
               {"frames", c.frames},
               {"canvas", c.canvas},
               {"min_objects", c.min_objects},
               {"max_objects", c.max_objects},
               {"min_size", c.min_size},
               {"max_size", c.max_size},
               {"max_speed", c.max_speed}};
  j["crop"] = {{"scale_min", crop.scale_min},     {"scale_max", crop.scale_max},
               {"ratio_min", crop.ratio_min},     {"ratio_max", crop.ratio_max},
               {"min_overlap", crop.min_overlap}, {"max_retries", crop.max_retries},
               {"view_size", crop.view_size},     {"min_side", crop.min_side}};
  j["model"] = {{"in_channels", model.in_channels},
                {"backbone_channels", model.backbone_channels},
                {"backbone_stride", model.backbone_stride},
                {"projector_hidden", model.projector_hidden},
                {"out_channels", model.out_channels},
                {"pseudo_hidden", model.pseudo_hidden}};
  j["train"] = {{"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"radius", train.radius},
                {"alpha", train.alpha},
                {"m0", train.m0},
                {"momentum_schedule", to_string(train.schedule)},
                {"lr", train.adam.lr},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"eps", train.adam.eps},
                {"weight_decay", train.adam.weight_decay}};
  j["propagation"] = {{"n_context", propagation.n_context},
                      {"top_k", propagation.top_k},
                      {"temperature", propagation.temperature},
                      {"locality_radius", propagation.locality_radius},
                      {"input_scale", propagation.input_scale}};
  j["metrics"] = {{"tol_frac", metrics.tol_frac},
                  {"recall_threshold", metrics.recall_threshold},
                  {"last_fraction", metrics.last_fraction}};
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text)
{
  json root;
  try
  {
    root = json::parse(text);
  }
  catch (const json::parse_error& e)
  {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object())
    throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  Section top(root, "");
  top.get("seed", cfg.seed);
  for (const char* s : {"data", "crop", "model", "train", "propagation", "metrics"})
    top.skip(s);
  top.finish();

  auto& c = cfg.data.corpus;
  Section d(root, "data");
  d.get("root", cfg.data.root);
  d.get("seed", c.seed);
  d.get("train_images", c.train_images);
  d.get("eval_videos", c.eval_videos);
  d.get("frames", c.frames);
  d.get("canvas", c.canvas);
  d.get("min_objects", c.min_objects);
  d.get("max_objects", c.max_objects);
  d.get("min_size", c.min_size);
  d.get("max_size", c.max_size);
  d.get("max_speed", c.max_speed);
  d.finish();

  Section cr(root, "crop");
  cr.get("scale_min", cfg.crop.scale_min);
  cr.get("scale_max", cfg.crop.scale_max);
  cr.get("ratio_min", cfg.crop.ratio_min);
  cr.get("ratio_max", cfg.crop.ratio_max);
  cr.get("min_overlap", cfg.crop.min_overlap);
  cr.get("max_retries", cfg.crop.max_retries);
  cr.get("view_size", cfg.crop.view_size);
  cr.get("min_side", cfg.crop.min_side);
  cr.finish();

  Section m(root, "model");
  m.get("in_channels", cfg.model.in_channels);
  m.get("backbone_channels", cfg.model.backbone_channels);
  m.get("backbone_stride", cfg.model.backbone_stride);
  m.get("projector_hidden", cfg.model.projector_hidden);
  m.get("out_channels", cfg.model.out_channels);
  m.get("pseudo_hidden", cfg.model.pseudo_hidden);
  m.finish();

  Section t(root, "train");
  std::string schedule = to_string(cfg.train.schedule);
  t.get("batch_size", cfg.train.batch_size);
  t.get("epochs", cfg.train.epochs);
  t.get("radius", cfg.train.radius);
  t.get("alpha", cfg.train.alpha);
  t.get("m0", cfg.train.m0);
  t.get("momentum_schedule", schedule);
  t.get("lr", cfg.train.adam.lr);
  t.get("beta1", cfg.train.adam.beta1);
  t.get("beta2", cfg.train.adam.beta2);
  t.get("eps", cfg.train.adam.eps);
  t.get("weight_decay", cfg.train.adam.weight_decay);
  t.finish();
  cfg.train.schedule = parse_schedule(schedule);

  Section p(root, "propagation");
  p.get("n_context", cfg.propagation.n_context);
  p.get("top_k", cfg.propagation.top_k);
  p.get("temperature", cfg.propagation.temperature);
  p.get("locality_radius", cfg.propagation.locality_radius);
  p.get("input_scale", cfg.propagation.input_scale);
  p.finish();

  Section e(root, "metrics");
  e.get("tol_frac", cfg.metrics.tol_frac);
  e.get("recall_threshold", cfg.metrics.recall_threshold);
  e.get("last_fraction", cfg.metrics.last_fraction);
  e.finish();

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
  if (!std::filesystem::exists(path))
    throw ConfigError("config file not found: " + path.string());
  return RunConfig::from_json(read_file(path));
}

std::uint64_t fnv1a(const std::string& bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes)
  {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} /* namespace hvc */
