#pragma once

// Accuracy and resource metrics for trained decoders.
//
// Operation counting rule: every synaptic layer (convolution, recurrent
// matrices, readout) contributes fan_in * fan_out multiply-accumulates per
// position plus one addition per bias element to the dense count. Effective
// operations count only products whose weight and input are both nonzero;
// they are accumulates (ACs) when the layer is driven by spikes (the raw spike
// bins, or a window whose inputs are all 0 or 1) and multiply-accumulates
// (MACs) otherwise. Elementwise gate and
// membrane arithmetic is not counted. All totals are divided by the window
// length, giving operations per input bin.

#include <cstddef>
#include <string>
#include <vector>

#include "spikedec/data.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

struct BenchReport {
  std::size_t footprint_bytes = 0;
  double connection_sparsity = 0.0;
  double activation_sparsity = 0.0;
  double dense = 0.0;
  double macs = 0.0;
  double acs = 0.0;
  double r2 = 0.0;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

/// Mean over output dimensions of 1 - SSE / SST. Throws EvalError when a
/// target dimension is constant.
double r2_score(const Tensor& pred, const Tensor& target);

/// 4 bytes per element.
std::size_t footprint_bytes(std::size_t parameter_elements, std::size_t buffer_elements);
/// Parameters plus the seq_len x channels input buffer and the recurrent state.
std::size_t footprint(const Model& model);
std::size_t state_elements(const ModelConfig& cfg);

/// Fraction of exactly-zero weight elements (kernels and matrices; biases excluded).
double connection_sparsity(const Model& model);

struct ZeroCount {
  std::size_t zeros = 0;
  std::size_t total = 0;
};

/// Zeros among the recurrent neuron outputs recorded in the trace.
ZeroCount activation_zeros(const ActivationTrace& trace);
double activation_sparsity(const ActivationTrace& trace);

struct LayerOps {
  std::string layer;
  double dense = 0.0, macs = 0.0, acs = 0.0;  // totals over the window
};

struct OpCounts {
  double dense = 0.0, macs = 0.0, acs = 0.0;  // per input bin
  std::vector<LayerOps> layers;
};

/// Operations of one fully connected layer over `inputs` [steps x fan_in]: every
/// weight times every input plus one addition per bias element per step is
/// dense; a product with nonzero weight and nonzero input is effective, and
/// counts as an accumulate when `binary` (inputs all 0/1), else as a MAC.
LayerOps count_matrix_ops(const std::string& name, const std::vector<const Tensor*>& matrices,
                          std::size_t bias_elements, const Tensor& inputs, bool binary);

/// Throws UsageError when the trace does not belong to the model.
OpCounts count_ops(const Model& model, const ActivationTrace& trace);

/// Evaluates every non-overlapping window of `test`. When `predictions` is
/// given, the per-window [seq_len x 2] outputs are appended to it.
BenchReport run_bench(const Model& model, const Recording& test,
                      std::vector<Tensor>* predictions = nullptr);

/// Structured text with keys footprint_bytes, connection_sparsity,
/// activation_sparsity, dense, macs, acs, r2.
std::string report_to_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);
std::string report_csv_header();
std::string report_csv_row(const BenchReport& report);

}  // namespace spikedec
