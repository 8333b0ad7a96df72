#pragma once

// Recordings of binned spike counts with paired 2-D cursor velocities, their
// file formats, a synthetic reaching generator, splitting and windowing.
//
// NDR1 layout (all little-endian):
//   "NDR1" | u32 channels | u32 bin_us | u64 steps
//   steps*channels u8 spike counts, time-major
//   steps*2 f32 velocities (vx, vy) per bin
//
// CSV layout: header `t,ch0,...,ch{C-1},vx,vy`, one row per bin, `t` is the bin index.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "spikedec/error.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec {

class Rng;

struct Recording {
  std::uint32_t bin_us = 4000;
  std::size_t channels = 0;
  std::vector<std::uint8_t> spikes;  // [steps x channels]
  std::vector<float> velocities;     // [steps x 2]

  std::size_t steps() const { return channels == 0 ? 0 : spikes.size() / channels; }
  void validate() const;
  /// Bins [begin, end).
  Recording slice(std::size_t begin, std::size_t end) const;
  /// Velocities as a [steps x 2] tensor.
  Tensor velocity_tensor() const;

  friend bool operator==(const Recording&, const Recording&) = default;
};

class ParseError : public Error {
 public:
  enum class Kind { io, bad_magic, truncated, overflow, bad_csv };

  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_ndr(const Recording& rec, const std::filesystem::path& path);
Recording load_ndr(const std::filesystem::path& path);

void save_csv(const Recording& rec, const std::filesystem::path& path);
Recording load_csv(const std::filesystem::path& path);

/// Picks the reader from the file extension (.csv or NDR1 otherwise).
Recording load_recording(const std::filesystem::path& path);

struct SynthParams {
  double base_hz = 10.0;           // firing rate at rest
  double mod_hz_per_unit = 30.0;   // rate gain per unit of velocity along the preferred direction
  double workspace = 100.0;        // targets are uniform in [-workspace, workspace]^2
  double peak_speed = 1.0;         // peak reach speed, units per bin
  std::size_t min_reach_bins = 50;
  std::size_t dwell_min_bins = 25;
  std::size_t dwell_max_bins = 75;
  std::uint32_t bin_us = 4000;
};

/// Successive point-to-point reaches with minimum-jerk speed profiles, encoded
/// by cosine-tuned Poisson channels with evenly spaced preferred directions.
Recording synth_reaching(Rng& rng, double seconds, std::size_t channels,
                         const SynthParams& params = {});

struct SplitSpec {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;

  void validate() const;
};

struct SplitParts {
  Recording train, val, test;
};

/// Contiguous train -> val -> test partition, each part truncated to a
/// multiple of `window` bins. Throws ConfigError when a part is shorter than one window.
SplitParts split(const Recording& rec, const SplitSpec& spec, std::size_t window = 1024);

struct Window {
  Tensor x;  // [channels x seq_len] spike counts
  Tensor y;  // [seq_len x 2] velocities
};

/// Windows of `seq_len` bins starting every `hop` bins (non-overlapping by default).
std::vector<Window> make_windows(const Recording& rec, std::size_t seq_len, std::size_t hop = 0);

/// Rebuilds a velocity trace from every `stride`-th sample by linear
/// interpolation. The closing keypoint one stride past the end is
/// extrapolated from the last two samples.
Tensor interp_reconstruct(const Tensor& velocities, std::size_t stride);

/// R^2 of interp_reconstruct against the original trace.
double interp_oracle_r2(const Tensor& velocities, std::size_t stride);

}  // namespace spikedec
