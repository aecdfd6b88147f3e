#pragma once

// Run configuration: a text file of `key = value` lines. `#` starts a
// comment; blank lines are ignored; unknown keys are errors. Lists are comma
// separated and may be wrapped in brackets; lambda also accepts a fraction
// such as 1/8.
//
// Model keys:     preset (reference | small | tiny, applied before the other
//                 keys), channels, depths, decoder_depths, c_d, num_classes,
//                 k1, lambda, regions, head_dim, mlp_ratio, ppm_bins,
//                 skips (subset of 4, 8, 16, or "none"), mff
// Optimizer keys: lr, steps, batch, seed, augment
// Data keys:      train_dir, val_dir, out_dir, image_size, spacing
// Run keys:       val_every, checkpoint_every, deterministic, threads

#include <cstdint>
#include <filesystem>
#include <string>

#include "dssa/model.hpp"

namespace dssa::io {

struct TrainOptions {
  double lr = 1e-4;
  std::size_t steps = 1000;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  bool augment = true;
  std::size_t val_every = 0;         // 0 disables periodic validation
  std::size_t checkpoint_every = 0;  // 0 keeps only the final checkpoint
};

struct DataOptions {
  std::filesystem::path train_dir;
  std::filesystem::path val_dir;
  std::filesystem::path out_dir = "run";
  std::size_t image_size = 256;
  double spacing = 1.0;  // millimetres per pixel at image_size
};

struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  DataOptions data;
  bool deterministic = false;  // forces one thread
  std::size_t threads = 0;     // 0 leaves the OpenMP default

  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Renders every key; parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);

}  // namespace dssa::io
