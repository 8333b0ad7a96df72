#pragma once

// The full decoder: convolution blocks compress the 1024-bin window to K
// feature vectors, a recurrent unit steps over them left to right, a linear
// readout turns each step into a 2-D velocity keypoint, and linear
// interpolation restores the original sequence length.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "spikedec/cells.hpp"
#include "spikedec/layers.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec {

enum class Recurrence { gru, lif, sgru };
enum class Track { track1, track2 };

std::string to_string(Recurrence r);
std::string to_string(Track t);
Recurrence parse_recurrence(std::string_view name);
Track parse_track(std::string_view name);

/// conv(k, padding) -> ReLU -> optional maxpool(2).
struct ConvBlockSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t padding = 0;
  bool pool = true;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct ModelConfig {
  Recurrence recurrence = Recurrence::gru;
  std::size_t input_channels = 96;
  std::size_t seq_len = 1024;
  std::vector<ConvBlockSpec> conv_blocks;
  std::size_t hidden_size = 20;
  std::size_t keypoint_stride = 4;
  LifSettings lif;
  std::uint64_t seed = 0;

  /// Sequence length entering the stack followed by the length after every
  /// convolution and every pooling layer.
  std::vector<std::size_t> stage_lengths() const;
  /// Number of keypoints K emitted by the convolution stack.
  std::size_t keypoint_count() const;
  /// Width of each feature vector handed to the recurrent unit.
  std::size_t feature_size() const;
  /// Throws ConfigError unless all sizes are positive and (K-1)*stride == seq_len.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Challenge-track architectures.
///   track1: blocks (32,3,5) (32,6,3) (32,12,6), hidden 64, 129 keypoints, stride 8
///   track2: blocks (10,3,3) (10,3,1),           hidden 20, 257 keypoints, stride 4
ModelConfig preset(Track track, Recurrence recurrence);

/// Configurations for the keypoint-count sweep (1025, 513, 257 or 129
/// keypoints, i.e. 1/2/4/8-step interpolation) with the track-2 widths.
ModelConfig keypoint_sweep_config(std::size_t keypoints, Recurrence recurrence,
                                  std::size_t channels = 10, std::size_t hidden = 20);

/// Track-2 geometry with the given conv width and recurrent size, for the
/// model-size sweep.
ModelConfig size_sweep_config(std::size_t channels, std::size_t hidden, Recurrence recurrence);

struct ReceptiveField {
  std::size_t size = 1;          // input bins feeding one keypoint
  std::size_t stride = 1;        // input shift between adjacent keypoints
  std::size_t left_padding = 0;  // keypoint j sees bins [j*stride - left_padding, ... + size)
};

ReceptiveField receptive_field(const ModelConfig& cfg);

using RecurrentParams = std::variant<GruParams, LifParams, SgruParams>;

struct ModelParams {
  std::vector<Conv1dParams> conv;
  RecurrentParams recurrent;
  LinearParams readout;

  /// Every trainable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> tensors();
  std::vector<std::pair<std::string, const Tensor*>> tensors() const;
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  ModelParams zeros_like() const;
};

struct Model {
  ModelConfig config;
  ModelParams params;

  /// Random initialisation driven by config.seed.
  static Model initialize(const ModelConfig& cfg);
  static Model zeros(const ModelConfig& cfg);
  std::size_t parameter_count() const { return params.parameter_count(); }
};

/// Parameter count implied by a configuration alone.
std::size_t parameter_count(const ModelConfig& cfg);

struct ConvBlockCache {
  Conv1dCache conv;
  std::optional<MaxPoolCache> pool;
};

using RecurrentCache =
    std::variant<std::vector<GruCache>, std::vector<LifCache>, std::vector<SgruCache>>;

struct ForwardCache {
  std::vector<ConvBlockCache> blocks;
  Tensor features;  // [K x F] recurrent inputs
  RecurrentCache recurrent;
  std::vector<LinearCache> readout;
  Tensor keypoints;  // [K x 2]
  SpikeMode mode = SpikeMode::hard;
};

/// Input of one synaptic layer over a whole window. Convolution entries hold
/// the unpadded [in_ch x L] input; matrix entries hold one row per recurrent
/// step. `binary` marks spike-driven input: always for the first convolution,
/// which reads raw spike bins, otherwise when every element is 0 or 1.
struct TraceEntry {
  std::string layer;
  Tensor input;
  bool binary = false;
};

/// Output of a recurrent neuron population, one row per step.
struct ActivationRecord {
  std::string layer;
  Tensor values;
};

struct ActivationTrace {
  std::vector<TraceEntry> synaptic;
  std::vector<ActivationRecord> activations;
};

struct ForwardResult {
  Tensor velocities;  // [seq_len x 2]
  Tensor keypoints;   // [K x 2]
  ForwardCache cache;
  ActivationTrace trace;  // filled when requested
};

struct ForwardOptions {
  SpikeMode mode = SpikeMode::hard;
  bool record_trace = false;
};

/// Runs one window x [input_channels x seq_len]. Recurrent and membrane
/// state start from zero.
ForwardResult forward(const Model& model, const Tensor& x, const ForwardOptions& options = {});

ActivationTrace make_trace(const Model& model, const ForwardCache& cache);

/// Convolution stack alone: x [C x L] -> features [F x K'].
Tensor conv_stack(const ModelParams& params, const ModelConfig& cfg, const Tensor& x);

/// Initial recurrent state for the configured unit.
CellState initial_cell_state(const ModelConfig& cfg);

/// One recurrent step followed by the readout; used by the streaming decoder.
std::pair<CellState, Tensor> recurrent_readout_step(const Model& model, const Tensor& feature,
                                                    const CellState& state);

}  // namespace spikedec
