#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "spikedec/model.hpp"
#include "spikedec/rng.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec::testing {

inline Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Spike-count input: mostly zeros and ones with occasional larger counts.
inline Tensor random_counts(std::size_t channels, std::size_t steps, Rng& rng, double rate = 0.3) {
  Tensor t({channels, steps});
  for (double& v : t.values()) v = rng.poisson(rate);
  return t;
}

inline Tensor flat(const std::vector<double>& v) {
  Tensor t({v.size()});
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

/// 16-step model small enough for finite differences: one conv block with
/// pooling, 9 keypoints, stride 2.
inline ModelConfig toy_config(Recurrence r, std::size_t channels = 4, std::size_t hidden = 4) {
  ModelConfig cfg;
  cfg.recurrence = r;
  cfg.input_channels = channels;
  cfg.seq_len = 16;
  cfg.conv_blocks = {{3, 3, 2, true}};
  cfg.hidden_size = hidden;
  cfg.keypoint_stride = 2;
  cfg.seed = 11;
  return cfg;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("spikedec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace spikedec::testing
