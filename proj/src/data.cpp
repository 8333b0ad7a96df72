#include "spikedec/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "spikedec/bench.hpp"
#include "spikedec/layers.hpp"
#include "spikedec/rng.hpp"

namespace spikedec {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'R', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t floor_to(std::size_t n, std::size_t multiple) { return n - n % multiple; }

}  // namespace

void Recording::validate() const {
  if (bin_us == 0) throw ConfigError("recording bin width must be positive");
  if (channels == 0) throw ConfigError("recording has no channels");
  if (spikes.size() % channels != 0 || velocities.size() != 2 * steps()) {
    throw DimensionError("recording spikes (" + std::to_string(spikes.size()) +
                         " values) and velocities (" + std::to_string(velocities.size()) +
                         " values) disagree on the number of bins");
  }
}

Recording Recording::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps()) throw ConfigError("recording slice out of range");
  Recording out;
  out.bin_us = bin_us;
  out.channels = channels;
  out.spikes.assign(spikes.begin() + static_cast<std::ptrdiff_t>(begin * channels),
                    spikes.begin() + static_cast<std::ptrdiff_t>(end * channels));
  out.velocities.assign(velocities.begin() + static_cast<std::ptrdiff_t>(2 * begin),
                        velocities.begin() + static_cast<std::ptrdiff_t>(2 * end));
  return out;
}

Tensor Recording::velocity_tensor() const {
  Tensor v({steps(), 2});
  for (std::size_t i = 0; i < velocities.size(); ++i) v[i] = velocities[i];
  return v;
}

// ---- NDR1 -----------------------------------------------------------------

void save_ndr(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.channels));
  put_le<std::uint32_t>(out, rec.bin_us);
  put_le<std::uint64_t>(out, rec.steps());
  out.append(reinterpret_cast<const char*>(rec.spikes.data()), rec.spikes.size());
  for (float v : rec.velocities) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::io, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Recording load_ndr(const std::filesystem::path& path) {
  const std::string raw = read_all(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 4 || !std::equal(kMagic, kMagic + 4, raw.begin())) {
    throw ParseError(ParseError::Kind::bad_magic, path.string() + ": missing NDR1 magic");
  }
  if (raw.size() < kHeaderBytes) {
    throw ParseError(ParseError::Kind::truncated,
                     path.string() + ": header needs " + std::to_string(kHeaderBytes) +
                         " bytes, file has " + std::to_string(raw.size()));
  }
  Recording rec;
  rec.channels = get_le<std::uint32_t>(p + 4);
  rec.bin_us = get_le<std::uint32_t>(p + 8);
  const auto steps = get_le<std::uint64_t>(p + 12);
  if (rec.channels == 0) throw ParseError(ParseError::Kind::truncated, "NDR1 file with 0 channels");

  constexpr std::uint64_t kMax = std::numeric_limits<std::size_t>::max() / 16;
  if (steps > kMax / rec.channels) {
    throw ParseError(ParseError::Kind::overflow,
                     path.string() + ": steps x channels overflows (" + std::to_string(steps) +
                         " x " + std::to_string(rec.channels) + ")");
  }
  const std::size_t spike_bytes = static_cast<std::size_t>(steps) * rec.channels;
  const std::size_t vel_bytes = static_cast<std::size_t>(steps) * 2 * 4;
  const std::size_t available = raw.size() - kHeaderBytes;
  if (available < spike_bytes) {
    throw ParseError(ParseError::Kind::truncated,
                     path.string() + ": spike block expects " + std::to_string(spike_bytes) +
                         " bytes, found " + std::to_string(available));
  }
  if (available - spike_bytes != vel_bytes) {
    throw ParseError(ParseError::Kind::truncated,
                     path.string() + ": velocity block expects " + std::to_string(vel_bytes) +
                         " bytes, found " + std::to_string(available - spike_bytes));
  }
  rec.spikes.assign(p + kHeaderBytes, p + kHeaderBytes + spike_bytes);
  rec.velocities.resize(2 * static_cast<std::size_t>(steps));
  const unsigned char* v = p + kHeaderBytes + spike_bytes;
  for (std::size_t i = 0; i < rec.velocities.size(); ++i) {
    rec.velocities[i] = std::bit_cast<float>(get_le<std::uint32_t>(v + 4 * i));
  }
  return rec;
}

// ---- CSV ------------------------------------------------------------------

void save_csv(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::io, "cannot write " + path.string());
  f << 't';
  for (std::size_t c = 0; c < rec.channels; ++c) f << ",ch" << c;
  f << ",vx,vy\n";
  char buf[64];
  for (std::size_t t = 0; t < rec.steps(); ++t) {
    f << t;
    for (std::size_t c = 0; c < rec.channels; ++c) {
      f << ',' << static_cast<unsigned>(rec.spikes[t * rec.channels + c]);
    }
    for (int d = 0; d < 2; ++d) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(rec.velocities[2 * t + d]));
      f << buf;
    }
    f << '\n';
  }
}

Recording load_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ParseError(ParseError::Kind::bad_csv, "empty CSV");
  std::size_t columns = std::count(line.begin(), line.end(), ',') + 1;
  if (columns < 4 || line.rfind("t,", 0) != 0) {
    throw ParseError(ParseError::Kind::bad_csv, "CSV header must be t,ch0..chN,vx,vy");
  }
  Recording rec;
  rec.channels = columns - 3;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw ParseError(ParseError::Kind::bad_csv, "CSV row " + std::to_string(row) + " has " +
                                                      std::to_string(cells.size()) + " fields, expected " +
                                                      std::to_string(columns));
    }
    try {
      for (std::size_t c = 0; c < rec.channels; ++c) {
        const long n = std::stol(cells[1 + c]);
        if (n < 0 || n > 255) throw ParseError(ParseError::Kind::bad_csv, "spike count out of range");
        rec.spikes.push_back(static_cast<std::uint8_t>(n));
      }
      rec.velocities.push_back(std::stof(cells[columns - 2]));
      rec.velocities.push_back(std::stof(cells[columns - 1]));
    } catch (const std::logic_error&) {
      throw ParseError(ParseError::Kind::bad_csv, "CSV row " + std::to_string(row) + " is not numeric");
    }
    ++row;
  }
  return rec;
}

Recording load_recording(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? load_csv(path) : load_ndr(path);
}

// ---- synthetic data -------------------------------------------------------

Recording synth_reaching(Rng& rng, double seconds, std::size_t channels,
                         const SynthParams& params) {
  if (!(seconds > 0.0)) throw ConfigError("synth_reaching: duration must be positive");
  if (channels < 2) throw ConfigError("synth_reaching: needs at least two channels");
  if (params.dwell_max_bins < params.dwell_min_bins) {
    throw ConfigError("synth_reaching: dwell_max_bins < dwell_min_bins");
  }
  const double dt = params.bin_us * 1e-6;
  const auto steps = static_cast<std::size_t>(std::llround(seconds / dt));

  // Kinematics first, then spikes, so each stage consumes the stream in a fixed order.
  std::vector<float> vel;
  vel.reserve(2 * steps);
  double px = 0.0, py = 0.0;
  while (vel.size() < 2 * steps) {
    const std::size_t dwell =
        params.dwell_min_bins + rng.below(params.dwell_max_bins - params.dwell_min_bins + 1);
    for (std::size_t k = 0; k < dwell && vel.size() < 2 * steps; ++k) {
      vel.push_back(0.0f);
      vel.push_back(0.0f);
    }
    const double tx = rng.uniform(-params.workspace, params.workspace);
    const double ty = rng.uniform(-params.workspace, params.workspace);
    const double dist = std::hypot(tx - px, ty - py);
    if (dist > 0.0) {
      const auto duration = std::max<std::size_t>(
          params.min_reach_bins,
          static_cast<std::size_t>(std::ceil(1.875 * dist / params.peak_speed)));
      const double ux = (tx - px) / dist, uy = (ty - py) / dist;
      for (std::size_t k = 0; k < duration && vel.size() < 2 * steps; ++k) {
        // minimum-jerk speed profile: (D/T) * 30 tau^2 (1 - tau)^2
        const double tau = (static_cast<double>(k) + 0.5) / static_cast<double>(duration);
        const double speed = dist / static_cast<double>(duration) * 30.0 * tau * tau *
                             (1.0 - tau) * (1.0 - tau);
        vel.push_back(static_cast<float>(speed * ux));
        vel.push_back(static_cast<float>(speed * uy));
      }
    }
    px = tx;
    py = ty;
  }

  Recording rec;
  rec.bin_us = params.bin_us;
  rec.channels = channels;
  rec.velocities = std::move(vel);
  rec.spikes.resize(steps * channels);
  std::vector<double> cx(channels), cy(channels);
  for (std::size_t i = 0; i < channels; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) /
                         static_cast<double>(channels);
    cx[i] = std::cos(theta);
    cy[i] = std::sin(theta);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    const double vx = rec.velocities[2 * t], vy = rec.velocities[2 * t + 1];
    for (std::size_t i = 0; i < channels; ++i) {
      const double rate =
          std::max(0.0, params.base_hz + params.mod_hz_per_unit * (vx * cx[i] + vy * cy[i]));
      rec.spikes[t * channels + i] =
          static_cast<std::uint8_t>(std::min<std::uint32_t>(255, rng.poisson(rate * dt)));
    }
  }
  return rec;
}

// ---- splitting and windowing ----------------------------------------------

void SplitSpec::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0) throw ConfigError("split fractions must be >= 0");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

SplitParts split(const Recording& rec, const SplitSpec& spec, std::size_t window) {
  spec.validate();
  const std::size_t total = rec.steps();
  auto part = [&](double frac) {
    return floor_to(static_cast<std::size_t>(std::floor(frac * static_cast<double>(total) + 1e-9)),
                    window);
  };
  const std::size_t n_train = part(spec.train);
  const std::size_t n_val = part(spec.val);
  const std::size_t n_test = std::min(part(spec.test), floor_to(total - n_train - n_val, window));
  const char* names[3] = {"train", "val", "test"};
  const std::size_t sizes[3] = {n_train, n_val, n_test};
  for (int i = 0; i < 3; ++i) {
    if (sizes[i] < window) {
      throw ConfigError(std::string("split: ") + names[i] + " part has " +
                        std::to_string(sizes[i]) + " bins, fewer than one window of " +
                        std::to_string(window));
    }
  }
  return {rec.slice(0, n_train), rec.slice(n_train, n_train + n_val),
          rec.slice(n_train + n_val, n_train + n_val + n_test)};
}

std::vector<Window> make_windows(const Recording& rec, std::size_t seq_len, std::size_t hop) {
  if (hop == 0) hop = seq_len;
  std::vector<Window> out;
  const std::size_t c = rec.channels;
  for (std::size_t start = 0; start + seq_len <= rec.steps(); start += hop) {
    Window w{Tensor({c, seq_len}), Tensor({seq_len, 2})};
    for (std::size_t t = 0; t < seq_len; ++t) {
      const std::uint8_t* row = rec.spikes.data() + (start + t) * c;
      for (std::size_t ch = 0; ch < c; ++ch) w.x.at(ch, t) = row[ch];
      w.y.at(t, 0) = rec.velocities[2 * (start + t)];
      w.y.at(t, 1) = rec.velocities[2 * (start + t) + 1];
    }
    out.push_back(std::move(w));
  }
  return out;
}

Tensor interp_reconstruct(const Tensor& velocities, std::size_t stride) {
  if (velocities.rank() != 2 || stride < 1) {
    throw DimensionError("interp_reconstruct: expects [T x D] velocities and stride >= 1");
  }
  const std::size_t steps = velocities.dim(0), width = velocities.dim(1);
  if (steps % stride != 0 || steps < 2 * stride) {
    throw ConfigError("interp_reconstruct: length " + std::to_string(steps) +
                      " must be a multiple of the stride and at least two strides");
  }
  const std::size_t count = steps / stride + 1;
  Tensor kp({count, width});
  for (std::size_t j = 0; j + 1 < count; ++j) {
    for (std::size_t d = 0; d < width; ++d) kp.at(j, d) = velocities.at(j * stride, d);
  }
  for (std::size_t d = 0; d < width; ++d) {
    const double last = velocities.at(steps - 1, d);
    const double slope = steps >= 2 ? last - velocities.at(steps - 2, d) : 0.0;
    kp.at(count - 1, d) = last + slope;
  }
  return lerp_upsample(kp, stride);
}

double interp_oracle_r2(const Tensor& velocities, std::size_t stride) {
  return r2_score(interp_reconstruct(velocities, stride), velocities);
}

}  // namespace spikedec
