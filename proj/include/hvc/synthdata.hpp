#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hvc/geometry.hpp"
#include "hvc/image_io.hpp"

namespace hvc {

enum class ShapeKind
{
  rect,
  circle,    // diameter size_w
  triangle,  // apex up, base size_w, height size_h
};

struct Shape
{
  ShapeKind kind = ShapeKind::rect;
  std::array<float, 3> color{1.f, 1.f, 1.f};
  double size_w = 8;
  double size_h = 8;
  double cx = 0;  // centre, pixels
  double cy = 0;
  double vx = 0;  // pixels per frame
  double vy = 0;
  int class_id = 1;

  double half_w() const
  {
    return size_w / 2;
  }
  double half_h() const
  {
    return kind == ShapeKind::circle ? size_w / 2 : size_h / 2;
  }
  bool contains(double px, double py) const;
};

// Shapes are drawn in list order, later ones on top.
struct SceneSpec
{
  int height = 64;
  int width = 64;
  std::vector<Shape> shapes;
  std::uint64_t background_seed = 0;
};

struct LabeledImage
{
  ImageBuffer image;
  LabelImage mask;
};

struct CorpusConfig
{
  int train_images = 512;
  int eval_videos = 20;
  int frames = 24;
  int canvas = 64;
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 14;
  double max_size = 26;
  double max_speed = 1.5;
  std::uint64_t seed = 0;
};

// Throws Error unless class ids are 1..n without gaps and every shape starts
// inside the canvas.
void validate_scene(const SceneSpec& spec);

LabeledImage gen_image(const SceneSpec& spec);

// Advances every shape by its velocity, reflecting off the canvas border.
SceneSpec advance_scene(const SceneSpec& spec);

std::vector<LabeledImage> gen_video(const SceneSpec& spec, int frames);

SceneSpec random_scene(Rng& rng, const CorpusConfig& cfg, bool moving);

// In-memory training images (masks dropped).
std::vector<ImageBuffer> synthetic_training_images(const CorpusConfig& cfg);

// Writes <root>/train/NNNNN.png, <root>/eval/frames/<video>/NNNNN.png and
// <root>/eval/masks/<video>/NNNNN.png.
void write_corpus(const std::filesystem::path& root, const CorpusConfig& cfg);

} /* namespace hvc */
