#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hvc/geometry.hpp"
#include "hvc/metrics.hpp"
#include "hvc/network.hpp"
#include "hvc/optim.hpp"
#include "hvc/propagation.hpp"
#include "hvc/synthdata.hpp"

namespace hvc {

struct DataConfig
{
  // Dataset root written by gen-data; empty trains on an in-memory corpus.
  std::string root;
  CorpusConfig corpus;
};

struct TrainConfig
{
  int batch_size = 16;
  int epochs = 20;
  double radius = 0.1;  // positive radius in normalized image coordinates
  double alpha = 1.0;   // weight of the dynamic term
  double m0 = 0.99;
  MomentumSchedule schedule = MomentumSchedule::cosine;
  AdamConfig adam;
};

struct RunConfig
{
  std::uint64_t seed = 0;
  DataConfig data;
  CropConfig crop;
  ModelConfig model;
  TrainConfig train;
  PropagationConfig propagation;
  EvalOptions metrics;

  // Throws ConfigError naming the first out-of-range field.
  void validate() const;

  // Full key set with resolved values, pretty-printed.
  std::string to_json() const;

  // Missing keys keep their defaults; unknown keys and type errors throw
  // ConfigError naming the key.
  static RunConfig from_json(const std::string& text);
};

std::string to_string(MomentumSchedule s);
MomentumSchedule parse_schedule(const std::string& name);

RunConfig load_config(const std::filesystem::path& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

inline std::uint64_t config_digest(const RunConfig& cfg)
{
  return fnv1a(cfg.to_json());
}

} /* namespace hvc */
