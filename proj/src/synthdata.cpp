#include "hvc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace fs = std::filesystem;

namespace hvc {

namespace {

// Seeded value noise on an 8 x 8 lattice, bilinearly interpolated, plus a
// two-colour linear gradient.
void paint_background(ImageBuffer& img, std::uint64_t seed)
{
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  std::array<float, 3> c0{}, c1{};
  for (int c = 0; c < 3; ++c)
  {
    c0[c] = 0.25f + 0.5f * u(rng);
    c1[c] = 0.25f + 0.5f * u(rng);
  }
  const double angle = 2.0 * std::numbers::pi * u(rng);
  const double dx = std::cos(angle), dy = std::sin(angle);

  constexpr int lattice = 9;
  constexpr float amplitude = 0.08f;
  std::vector<float> noise(lattice * lattice * 3);
  for (auto& n : noise)
    n = amplitude * (2.f * u(rng) - 1.f);

  const double diag = std::hypot(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
    {
      const double px = x + 0.5 - img.width / 2.0;
      const double py = y + 0.5 - img.height / 2.0;
      const float t = float(std::clamp((px * dx + py * dy) / diag + 0.5, 0.0, 1.0));
      const double gx = (x + 0.5) / img.width * (lattice - 1);
      const double gy = (y + 0.5) / img.height * (lattice - 1);
      const int ix = std::min(int(gx), lattice - 2);
      const int iy = std::min(int(gy), lattice - 2);
      const float fx = float(gx - ix), fy = float(gy - iy);
      for (int c = 0; c < 3; ++c)
      {
        auto n = [&](int a, int b) { return noise[(std::size_t(a) * lattice + b) * 3 + c]; };
        const float v = (1 - fy) * ((1 - fx) * n(iy, ix) + fx * n(iy, ix + 1)) +
                        fy * ((1 - fx) * n(iy + 1, ix) + fx * n(iy + 1, ix + 1));
        img.at(y, x, c) = std::clamp((1 - t) * c0[c] + t * c1[c] + v, 0.f, 1.f);
      }
    }
}

// 1-D position update with reflection at [lo, hi].
void bounce(double& pos, double& vel, double lo, double hi)
{
  if (hi <= lo)
  {
    pos = (lo + hi) / 2;
    vel = 0;
    return;
  }
  pos += vel;
  while (pos < lo || pos > hi)
  {
    if (pos < lo)
      pos = 2 * lo - pos;
    else
      pos = 2 * hi - pos;
    vel = -vel;
  }
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v)
{
  const float c = v * s;
  const float hp = h * 6.f;
  const float x = c * (1 - std::fabs(std::fmod(hp, 2.f) - 1));
  std::array<float, 3> rgb{};
  switch (int(hp) % 6)
  {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (auto& ch : rgb)
    ch += v - c;
  return rgb;
}

std::string frame_name(int i, const char* ext)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d%s", i, ext);
  return buf;
}

}  // namespace

bool Shape::contains(double px, double py) const
{
  switch (kind)
  {
    case ShapeKind::rect:
      return px >= cx - size_w / 2 && px < cx + size_w / 2 && py >= cy - size_h / 2 &&
             py < cy + size_h / 2;
    case ShapeKind::circle:
    {
      const double r = size_w / 2;
      return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
    }
    case ShapeKind::triangle:
    {
      const double top = cy - size_h / 2;
      if (py < top || py >= cy + size_h / 2)
        return false;
      return std::fabs(px - cx) <= (size_w / 2) * (py - top) / size_h;
    }
  }
  return false;
}

void validate_scene(const SceneSpec& spec)
{
  if (spec.height < 1 || spec.width < 1)
    throw Error("scene canvas must be non-empty");
  std::vector<int> ids;
  for (const auto& s : spec.shapes)
  {
    ids.push_back(s.class_id);
    if (s.cx - s.half_w() < 0 || s.cx + s.half_w() > spec.width || s.cy - s.half_h() < 0 ||
        s.cy + s.half_h() > spec.height)
      throw Error("shape of class " + std::to_string(s.class_id) + " starts out of bounds");
  }
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != int(i) + 1)
      throw Error("class ids must be unique and contiguous from 1");
}

LabeledImage gen_image(const SceneSpec& spec)
{
  LabeledImage out{ImageBuffer(spec.height, spec.width), LabelImage::Zero(spec.height, spec.width)};
  paint_background(out.image, spec.background_seed);
  for (const auto& s : spec.shapes)
  {
    const int y0 = std::max(0, int(std::floor(s.cy - s.half_h())));
    const int y1 = std::min(spec.height, int(std::ceil(s.cy + s.half_h())) + 1);
    const int x0 = std::max(0, int(std::floor(s.cx - s.half_w())));
    const int x1 = std::min(spec.width, int(std::ceil(s.cx + s.half_w())) + 1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (s.contains(x + 0.5, y + 0.5))
        {
          for (int c = 0; c < 3; ++c)
            out.image.at(y, x, c) = s.color[c];
          out.mask(y, x) = s.class_id;
        }
  }
  return out;
}

SceneSpec advance_scene(const SceneSpec& spec)
{
  SceneSpec next = spec;
  for (auto& s : next.shapes)
  {
    bounce(s.cx, s.vx, s.half_w(), spec.width - s.half_w());
    bounce(s.cy, s.vy, s.half_h(), spec.height - s.half_h());
  }
  return next;
}

std::vector<LabeledImage> gen_video(const SceneSpec& spec, int frames)
{
  if (frames < 2)
    throw Error("gen_video needs at least two frames");
  validate_scene(spec);
  std::vector<LabeledImage> out;
  out.reserve(frames);
  SceneSpec cur = spec;
  for (int t = 0; t < frames; ++t)
  {
    out.push_back(gen_image(cur));
    cur = advance_scene(cur);
  }
  return out;
}

SceneSpec random_scene(Rng& rng, const CorpusConfig& cfg, bool moving)
{
  SceneSpec spec;
  spec.height = cfg.canvas;
  spec.width = cfg.canvas;
  spec.background_seed = rng();
  std::uniform_int_distribution<int> count(cfg.min_objects, cfg.max_objects);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> size(cfg.min_size, cfg.max_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> speed(-cfg.max_speed, cfg.max_speed);
  const int n = count(rng);
  const float hue0 = float(unit(rng));
  for (int i = 0; i < n; ++i)
  {
    Shape s;
    s.kind = static_cast<ShapeKind>(kind(rng));
    s.size_w = std::round(size(rng));
    s.size_h = s.kind == ShapeKind::circle ? s.size_w : std::round(size(rng));
    s.cx = s.half_w() + unit(rng) * (cfg.canvas - 2 * s.half_w());
    s.cy = s.half_h() + unit(rng) * (cfg.canvas - 2 * s.half_h());
    // Hues spread around the wheel so objects in one scene stay distinct.
    const float hue = std::fmod(hue0 + float(i) / float(n) + 0.1f * float(unit(rng)), 1.f);
    s.color = hsv_to_rgb(hue, 0.6f + 0.4f * float(unit(rng)), 0.6f + 0.4f * float(unit(rng)));
    if (moving)
    {
      s.vx = speed(rng);
      s.vy = speed(rng);
    }
    s.class_id = i + 1;
    spec.shapes.push_back(s);
  }
  return spec;
}

std::vector<ImageBuffer> synthetic_training_images(const CorpusConfig& cfg)
{
  Rng rng(cfg.seed);
  std::vector<ImageBuffer> out;
  out.reserve(cfg.train_images);
  for (int i = 0; i < cfg.train_images; ++i)
    out.push_back(gen_image(random_scene(rng, cfg, false)).image);
  return out;
}

void write_corpus(const fs::path& root, const CorpusConfig& cfg)
{
  const auto train = synthetic_training_images(cfg);
  for (std::size_t i = 0; i < train.size(); ++i)
    write_image(root / "train" / frame_name(int(i), ".png"), train[i]);

  // Separate stream so the eval set does not depend on the train size.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int v = 0; v < cfg.eval_videos; ++v)
  {
    char name[32];
    std::snprintf(name, sizeof name, "video%03d", v);
    const auto frames = gen_video(random_scene(rng, cfg, true), cfg.frames);
    for (std::size_t t = 0; t < frames.size(); ++t)
    {
      write_image(root / "eval" / "frames" / name / frame_name(int(t), ".png"), frames[t].image);
      write_labels(root / "eval" / "masks" / name / frame_name(int(t), ".png"), frames[t].mask);
    }
  }
}

} /* namespace hvc */
