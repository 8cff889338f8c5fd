#include <gtest/gtest.h>

#include <filesystem>

#include "hvc/checkpoint.hpp"
#include "hvc/config.hpp"

using namespace hvc;
namespace fs = std::filesystem;

TEST(Config, RoundTrip)
{
  RunConfig cfg;
  cfg.seed = 42;
  cfg.model.backbone_channels = {4, 8};
  cfg.train.schedule = MomentumSchedule::linear;
  cfg.train.alpha = 0.0;
  cfg.propagation.top_k = 3;
  const auto text = cfg.to_json();
  EXPECT_EQ(RunConfig::from_json(text).to_json(), text);
  EXPECT_EQ(config_digest(RunConfig::from_json(text)), config_digest(cfg));
  EXPECT_NE(config_digest(RunConfig{}), config_digest(cfg));
}

TEST(Config, MissingKeysKeepDefaults)
{
  const auto cfg = RunConfig::from_json(R"({"train": {"epochs": 3}})");
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.batch_size, 16);
  EXPECT_DOUBLE_EQ(cfg.train.radius, 0.1);
}

TEST(Config, UnknownKeyIsNamed)
{
  try
  {
    RunConfig::from_json(R"({"train": {"epoch": 3}})");
    FAIL() << "no error";
  }
  catch (const ConfigError& e)
  {
    EXPECT_NE(std::string(e.what()).find("train.epoch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_json(R"({"bogus": 1})"), ConfigError);
}

TEST(Config, TypeErrorsAndRanges)
{
  EXPECT_THROW(RunConfig::from_json(R"({"train": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(RunConfig::from_json("{not json"), ConfigError);
  RunConfig cfg;
  cfg.train.radius = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.train.m0 = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_schedule("exponential"), ConfigError);
  EXPECT_EQ(parse_schedule(to_string(MomentumSchedule::cosine)), MomentumSchedule::cosine);
}

TEST(Fnv1a, KnownValues)
{
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Checkpoint, EncodeDecodeRoundTrip)
{
  Checkpoint c;
  c.config_digest = 77;
  const std::vector<float> f{1.5f, -2.f, 3.25f};
  c.add("w", f.data(), {3});
  c.add_scalar<double>("s", 0.125);
  c.add_vector<std::int64_t>("order", {3, 1, 2});
  c.add_text("t", "hello");
  const auto bytes = encode_checkpoint(c);
  const auto d = decode_checkpoint(bytes);
  EXPECT_EQ(d.config_digest, 77u);
  EXPECT_EQ(d.get_vector<float>("w"), f);
  EXPECT_EQ(d.get_scalar<double>("s"), 0.125);
  EXPECT_EQ(d.get_vector<std::int64_t>("order"), (std::vector<std::int64_t>{3, 1, 2}));
  EXPECT_EQ(d.get_text("t"), "hello");
  EXPECT_EQ(encode_checkpoint(d), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "HVC1");
  EXPECT_THROW(d.get_vector<double>("w"), StoreMismatch);
  EXPECT_THROW(d.at("missing"), StoreMismatch);
}

TEST(Checkpoint, RejectsCorruptInput)
{
  Checkpoint c;
  c.add_scalar<double>("s", 1.0);
  const auto bytes = encode_checkpoint(c);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), IoError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IoError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  EXPECT_THROW(c.add_scalar<double>("s", 2.0), StoreMismatch);
}

TEST(Checkpoint, StoresRoundTripThroughFiles)
{
  ParameterStore<float> a;
  a.add("x", {2, 2});
  a.add("b", {3}, false);
  a[0].value << 1, 2, 3, 4;
  a[1].value << 5, 6, 7;
  Checkpoint c;
  add_store(c, "net", a);
  const auto path = fs::temp_directory_path() / "hvc_ckpt_test.hvc";
  save_checkpoint(path, c);
  const auto loaded = load_checkpoint(path);

  ParameterStore<float> b;
  b.add("x", {2, 2});
  b.add("b", {3}, false);
  read_store(loaded, "net", b);
  EXPECT_EQ(b[0].value, a[0].value);
  EXPECT_EQ(b[1].value, a[1].value);

  ParameterStore<float> wrong;
  wrong.add("x", {4});
  wrong.add("b", {3}, false);
  EXPECT_THROW(read_store(loaded, "net", wrong), StoreMismatch);
  ParameterStore<double> wrong_type;
  wrong_type.add("x", {2, 2});
  EXPECT_THROW(read_store(loaded, "net", wrong_type), StoreMismatch);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), IoError);
}
