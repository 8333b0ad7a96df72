#pragma once

// Online decoding: bins arrive one at a time and a keypoint is produced as
// soon as its receptive field is complete. Each new keypoint releases the
// interpolated segment between it and the previous one, so the emitted
// values match the batch output sample for sample up to the boundary region
// described by stream_boundary.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "spikedec/cells.hpp"
#include "spikedec/model.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec {

struct StreamState {
  ReceptiveField field;
  std::size_t keypoint_stride = 1;
  std::deque<std::vector<double>> bins;  // most recent field.size bins
  std::size_t bins_seen = 0;
  std::size_t next_keypoint = 0;
  CellState cell;
  std::optional<Tensor> previous_keypoint;  // [2]
};

StreamState stream_init(const Model& model);

/// Feeds one bin of input_channels counts. Returns the [stride x 2] segment
/// released by this bin, if any. Recurrent state is never reset.
std::optional<Tensor> stream_push(const Model& model, StreamState& state,
                                  std::span<const double> bin);

/// Where a window's worth of streamed output stops agreeing with batch.
/// Batch forward zero-pads every conv layer at the window's right edge; a
/// stream has no right edge, so keypoints whose dependencies reach that
/// padding at any layer differ. The left edge is replicated exactly.
struct StreamBoundary {
  std::size_t emitted_rows = 0;   // rows released by pushing seq_len bins
  std::size_t interior_rows = 0;  // leading rows equal to batch output
};

StreamBoundary stream_boundary(const ModelConfig& cfg);

struct StreamTiming {
  double latency_ms = 0.0;  // receptive field length in time
  double rate_hz = 0.0;     // keypoints per second
};

StreamTiming stream_latency(const Model& model, std::uint32_t bin_us = 4000);
StreamTiming stream_latency(std::size_t field_bins, std::size_t stride_bins,
                            std::uint32_t bin_us = 4000);

}  // namespace spikedec
