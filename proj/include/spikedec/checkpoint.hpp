#pragma once

// On-disk checkpoint: `<prefix>.manifest.json` describes the configuration and
// a tensor table (name, shape, offset and count in elements); `<prefix>.weights.bin`
// holds the tensors back to back as little-endian IEEE-754 binary32.
//
// Manifest keys:
//   format        "spikedec-checkpoint"
//   version       1
//   config        recurrence, input_channels, seq_len, hidden_size,
//                 keypoint_stride, seed, conv_blocks[{out_channels, kernel,
//                 padding, pool}], lif{beta, theta, surrogate_slope}
//   tensors       [{name, shape, offset, count}]
//   blob_elements total element count of the weights file

#include <filesystem>
#include <string>

#include "spikedec/error.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

inline constexpr int kCheckpointVersion = 1;

class LoadError : public Error {
 public:
  enum class Kind { missing_file, corrupt_manifest, version_mismatch, layout, blob_size };

  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointPaths {
  std::filesystem::path manifest;
  std::filesystem::path weights;
};

/// Accepts either the bare prefix or the manifest path.
CheckpointPaths checkpoint_paths(const std::filesystem::path& prefix);

void save_checkpoint(const Model& model, const std::filesystem::path& prefix);
Model load_checkpoint(const std::filesystem::path& prefix);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

}  // namespace spikedec
