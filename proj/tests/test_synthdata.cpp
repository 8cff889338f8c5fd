#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include "hvc/synthdata.hpp"
#include "support/oracles.hpp"

using namespace hvc;
namespace fs = std::filesystem;

namespace {

Shape rect(double cx, double cy, double w, double h, int id)
{
  Shape s;
  s.kind = ShapeKind::rect;
  s.cx = cx;
  s.cy = cy;
  s.size_w = w;
  s.size_h = h;
  s.class_id = id;
  return s;
}

long count(const LabelImage& m, int id)
{
  return (m.array() == id).count();
}

}  // namespace

TEST(GenImage, EmptySceneIsBackground)
{
  const auto out = gen_image(SceneSpec{});
  EXPECT_EQ(out.mask, LabelImage::Zero(64, 64));
  for (float v : out.image.values)
  {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
}

TEST(GenImage, FullCanvasRectangle)
{
  SceneSpec spec;
  spec.shapes.push_back(rect(32, 32, 64, 64, 1));
  EXPECT_EQ(gen_image(spec).mask, LabelImage::Ones(64, 64));
}

TEST(GenImage, LaterShapeWinsOverlap)
{
  SceneSpec spec;
  spec.shapes.push_back(rect(15, 15, 10, 10, 1));  // [10,20) x [10,20)
  spec.shapes.push_back(rect(20, 17, 8, 6, 2));    // [16,24) x [14,20)
  const auto m = gen_image(spec).mask;
  const long overlap = 4 * 6;
  EXPECT_EQ(count(m, 2), 8 * 6);
  EXPECT_EQ(count(m, 1), 10 * 10 - overlap);
  EXPECT_EQ(m(15, 17), 2);
  EXPECT_EQ(m(12, 12), 1);
}

TEST(GenImage, AreasMatchAnalyticShapes)
{
  SceneSpec spec;
  spec.shapes.push_back(rect(14.3, 20.6, 9.4, 7.2, 1));
  Shape c;
  c.kind = ShapeKind::circle;
  c.size_w = 16;
  c.cx = 44;
  c.cy = 40;
  c.class_id = 2;
  spec.shapes.push_back(c);
  Shape t;
  t.kind = ShapeKind::triangle;
  t.size_w = 18;
  t.size_h = 14;
  t.cx = 20;
  t.cy = 48;
  t.class_id = 3;
  spec.shapes.push_back(t);
  const auto m = gen_image(spec).mask;
  // Rectangle: at most one extra or missing column and row.
  EXPECT_LE(std::abs(count(m, 1) - 9.4 * 7.2), 9.4 + 7.2 + 1);
  // Curved and slanted edges: one pixel of slack along the perimeter.
  EXPECT_LE(std::abs(count(m, 2) - std::numbers::pi * 64), std::numbers::pi * 16);
  EXPECT_LE(std::abs(count(m, 3) - 18 * 14 / 2.0), 18 + 2 * std::hypot(9.0, 14.0));
}

TEST(GenImage, RejectsBadScenes)
{
  SceneSpec spec;
  spec.shapes.push_back(rect(15, 15, 10, 10, 2));
  EXPECT_THROW(validate_scene(spec), Error);
  spec.shapes[0] = rect(2, 15, 10, 10, 1);
  EXPECT_THROW(validate_scene(spec), Error);
}

TEST(GenVideo, StaticShapesGiveIdenticalFrames)
{
  SceneSpec spec;
  spec.shapes.push_back(rect(30, 30, 12, 10, 1));
  const auto frames = gen_video(spec, 5);
  ASSERT_EQ(frames.size(), 5u);
  for (const auto& f : frames)
  {
    EXPECT_EQ(f.mask, frames[0].mask);
    EXPECT_EQ(f.image.values, frames[0].image.values);
  }
  EXPECT_THROW(gen_video(spec, 1), Error);
}

TEST(GenVideo, RigidTranslation)
{
  SceneSpec spec;
  auto s = rect(12, 30, 10, 10, 1);
  s.vx = 1;
  spec.shapes.push_back(s);
  const auto frames = gen_video(spec, 20);
  for (std::size_t t = 0; t < frames.size(); ++t)
  {
    EXPECT_EQ(count(frames[t].mask, 1), 100);
    // The translated first mask.
    LabelImage shifted = LabelImage::Zero(64, 64);
    shifted.block(25, 7 + int(t), 10, 10).setConstant(1);
    EXPECT_EQ(frames[t].mask, shifted) << t;
  }
}

TEST(GenVideo, BounceFollowsReflection)
{
  SceneSpec spec;
  auto s = rect(50, 20, 10, 6, 1);
  s.vx = 3.7;
  s.vy = -2.3;
  spec.shapes.push_back(s);
  SceneSpec cur = spec;
  for (int t = 1; t <= 60; ++t)
  {
    cur = advance_scene(cur);
    EXPECT_NEAR(cur.shapes[0].cx, oracle::reflected_position(50, 3.7, 5, 59, t), 1e-9) << t;
    EXPECT_NEAR(cur.shapes[0].cy, oracle::reflected_position(20, -2.3, 3, 61, t), 1e-9) << t;
  }
}

TEST(Corpus, SameSeedSameBytes)
{
  CorpusConfig cfg;
  cfg.train_images = 3;
  cfg.eval_videos = 2;
  cfg.frames = 3;
  const auto a = fs::temp_directory_path() / "hvc_corpus_a";
  const auto b = fs::temp_directory_path() / "hvc_corpus_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_corpus(a, cfg);
  write_corpus(b, cfg);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a))
  {
    if (!e.is_regular_file())
      continue;
    ++files;
    EXPECT_EQ(read_file(e.path()), read_file(b / fs::relative(e.path(), a)));
  }
  EXPECT_EQ(files, 3u + 2 * 3 * 2);
  const auto m = read_labels(a / "eval" / "masks" / "video000" / "00000.png");
  EXPECT_EQ(m.rows(), 64);
  EXPECT_GE(m.maxCoeff(), 1);
}

TEST(Corpus, ClassIdsAreContiguous)
{
  CorpusConfig cfg;
  Rng rng(4);
  for (int i = 0; i < 50; ++i)
  {
    const auto spec = random_scene(rng, cfg, true);
    EXPECT_NO_THROW(validate_scene(spec));
    EXPECT_GE(int(spec.shapes.size()), cfg.min_objects);
    EXPECT_LE(int(spec.shapes.size()), cfg.max_objects);
  }
}
