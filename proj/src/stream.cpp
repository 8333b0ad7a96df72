#include "spikedec/stream.hpp"

#include <string>

#include "spikedec/error.hpp"
#include "spikedec/layers.hpp"

namespace spikedec {

namespace {

struct Range {
  long long lo = 0;
  long long hi = 0;  // inclusive
  std::size_t size() const { return static_cast<std::size_t>(hi - lo + 1); }
};

// Zeroes columns that sit left of the sequence start. The batch path pads
// every layer with zeros there, so these positions must not carry values
// computed from earlier layers' padding.
void clear_negative(Tensor& t, long long first_position) {
  if (first_position >= 0) return;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(-first_position), t.dim(1));
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    auto row = t.row(c);
    for (std::size_t i = 0; i < n; ++i) row[i] = 0.0;
  }
}

Tensor compute_feature(const Model& model, const StreamState& state, std::size_t j) {
  const ModelConfig& cfg = model.config;
  const std::size_t blocks = cfg.conv_blocks.size();

  // Walk back from feature position j to the input positions each block needs.
  std::vector<Range> inputs(blocks);
  Range need{static_cast<long long>(j), static_cast<long long>(j)};
  for (std::size_t b = blocks; b-- > 0;) {
    const ConvBlockSpec& spec = cfg.conv_blocks[b];
    if (spec.pool) need = {2 * need.lo, 2 * need.hi + 1};
    const long long p = static_cast<long long>(spec.padding);
    need = {need.lo - p, need.hi - p + static_cast<long long>(spec.kernel) - 1};
    inputs[b] = need;
  }

  const long long oldest = static_cast<long long>(state.bins_seen - state.bins.size());
  Tensor h({cfg.input_channels, inputs[0].size()});
  for (std::size_t i = 0; i < inputs[0].size(); ++i) {
    const long long pos = inputs[0].lo + static_cast<long long>(i);
    if (pos < 0) continue;
    if (pos < oldest || pos >= static_cast<long long>(state.bins_seen)) {
      throw EvalError("stream: bin " + std::to_string(pos) + " is not buffered");
    }
    const auto& bin = state.bins[static_cast<std::size_t>(pos - oldest)];
    for (std::size_t c = 0; c < cfg.input_channels; ++c) h.at(c, i) = bin[c];
  }

  for (std::size_t b = 0; b < blocks; ++b) {
    h = conv1d_valid(model.params.conv[b], h, Activation::relu);
    if (cfg.conv_blocks[b].pool) h = maxpool1d(h).y;
    const long long first = b + 1 < blocks ? inputs[b + 1].lo : static_cast<long long>(j);
    clear_negative(h, first);
  }
  if (h.dim(1) != 1) throw EvalError("stream: feature window did not reduce to one position");

  Tensor feature({h.dim(0)});
  for (std::size_t c = 0; c < h.dim(0); ++c) feature[c] = h.at(c, 0);
  return feature;
}

}  // namespace

StreamState stream_init(const Model& model) {
  model.config.validate();
  StreamState state;
  state.field = receptive_field(model.config);
  state.keypoint_stride = model.config.keypoint_stride;
  state.cell = initial_cell_state(model.config);
  return state;
}

std::optional<Tensor> stream_push(const Model& model, StreamState& state,
                                  std::span<const double> bin) {
  if (bin.size() != model.config.input_channels) {
    throw DimensionError("stream: bin has " + std::to_string(bin.size()) + " channels, expected " +
                         std::to_string(model.config.input_channels));
  }
  state.bins.emplace_back(bin.begin(), bin.end());
  ++state.bins_seen;
  while (state.bins.size() > state.field.size) state.bins.pop_front();

  std::optional<Tensor> emitted;
  const long long stride = static_cast<long long>(state.field.stride);
  const long long width = static_cast<long long>(state.field.size);
  const long long left = static_cast<long long>(state.field.left_padding);
  // keypoint j is ready once bin j*stride - left + size - 1 has arrived
  while (static_cast<long long>(state.next_keypoint) * stride - left + width <=
         static_cast<long long>(state.bins_seen)) {
    const Tensor feature = compute_feature(model, state, state.next_keypoint);
    auto [cell, keypoint] = recurrent_readout_step(model, feature, state.cell);
    state.cell = std::move(cell);
    if (state.previous_keypoint) {
      const std::size_t s = state.keypoint_stride;
      const Tensor& prev = *state.previous_keypoint;
      Tensor segment({s, 2});
      for (std::size_t r = 0; r < s; ++r) {
        segment.at(r, 0) = lerp_point(prev[0], keypoint[0], r, s);
        segment.at(r, 1) = lerp_point(prev[1], keypoint[1], r, s);
      }
      if (emitted) {
        // several keypoints completed by one bin: concatenate their segments
        Tensor joined({emitted->dim(0) + s, 2});
        std::copy(emitted->values().begin(), emitted->values().end(), joined.values().begin());
        std::copy(segment.values().begin(), segment.values().end(),
                  joined.values().begin() + static_cast<std::ptrdiff_t>(emitted->size()));
        emitted = std::move(joined);
      } else {
        emitted = std::move(segment);
      }
    }
    state.previous_keypoint = std::move(keypoint);
    ++state.next_keypoint;
  }
  return emitted;
}

StreamBoundary stream_boundary(const ModelConfig& cfg) {
  cfg.validate();
  const ReceptiveField rf = receptive_field(cfg);
  const std::vector<std::size_t> lengths = cfg.stage_lengths();
  const long long L = static_cast<long long>(cfg.seq_len);
  const long long K = static_cast<long long>(cfg.keypoint_count());

  // keypoint j is interior when every position it needs, at every layer,
  // lies inside that layer's unpadded batch input
  auto interior = [&](long long j) {
    long long hi = j;
    std::size_t stage = lengths.size() - 1;
    for (std::size_t b = cfg.conv_blocks.size(); b-- > 0;) {
      const ConvBlockSpec& spec = cfg.conv_blocks[b];
      if (spec.pool) {
        hi = 2 * hi + 1;
        --stage;
        if (hi >= static_cast<long long>(lengths[stage])) return false;
      }
      hi = hi - static_cast<long long>(spec.padding) + static_cast<long long>(spec.kernel) - 1;
      --stage;
      if (hi >= static_cast<long long>(lengths[stage])) return false;
    }
    return true;
  };
  long long inside = 0;
  while (inside < K && interior(inside)) ++inside;

  const long long stride = static_cast<long long>(rf.stride);
  long long ready = 0;
  while (ready < K && ready * stride - static_cast<long long>(rf.left_padding) +
                              static_cast<long long>(rf.size) <= L) {
    ++ready;
  }
  // a segment is released once the keypoint closing it is known
  const auto rows = [&](long long keypoints) {
    return static_cast<std::size_t>(std::max(0LL, keypoints - 1)) * cfg.keypoint_stride;
  };
  return {rows(ready), std::min(rows(inside), cfg.seq_len)};
}

StreamTiming stream_latency(std::size_t field_bins, std::size_t stride_bins,
                            std::uint32_t bin_us) {
  if (field_bins == 0 || stride_bins == 0 || bin_us == 0) {
    throw ConfigError("stream_latency: receptive field, stride and bin width must be positive");
  }
  const double bin_ms = static_cast<double>(bin_us) / 1000.0;
  return {static_cast<double>(field_bins) * bin_ms,
          1000.0 / (static_cast<double>(stride_bins) * bin_ms)};
}

StreamTiming stream_latency(const Model& model, std::uint32_t bin_us) {
  const ReceptiveField rf = receptive_field(model.config);
  return stream_latency(rf.size, rf.stride, bin_us);
}

}  // namespace spikedec
