#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "spikedec/bench.hpp"
#include "spikedec/data.hpp"
#include "spikedec/rng.hpp"
#include "support.hpp"

using namespace spikedec;
using spikedec::testing::read_bytes;
using spikedec::testing::scratch_dir;

namespace {

Recording tiny() {
  Recording r;
  r.channels = 1;
  r.spikes = {1, 0};
  r.velocities = {0.0f, 0.0f, 1.0f, -1.0f};
  return r;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParseError::Kind parse_kind(const std::filesystem::path& p) {
  try {
    load_ndr(p);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected ParseError";
  return ParseError::Kind::io;
}

// Cosine-tuned population: sum_i (n_i - b dt) d_i = (C m dt / 2) v on average,
// so v_hat = 2 / (C m dt) * sum_i (n_i - b dt) d_i, then a centred box filter.
Tensor population_vector(const Recording& r, double base_hz, double mod_hz, std::size_t smooth) {
  const double dt = r.bin_us * 1e-6;
  const std::size_t C = r.channels, T = r.steps();
  Tensor raw({T, 2});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < C; ++i) {
      const double th = 2.0 * std::numbers::pi * double(i) / double(C);
      const double n = r.spikes[t * C + i] - base_hz * dt;
      raw.at(t, 0) += n * std::cos(th);
      raw.at(t, 1) += n * std::sin(th);
    }
  }
  const double gain = 2.0 / (double(C) * mod_hz * dt);
  Tensor out({T, 2});
  const long half = static_cast<long>(smooth / 2);
  for (long t = 0; t < static_cast<long>(T); ++t) {
    const long lo = std::max(0L, t - half), hi = std::min(static_cast<long>(T) - 1, t + half);
    for (std::size_t d = 0; d < 2; ++d) {
      double s = 0.0;
      for (long u = lo; u <= hi; ++u) s += raw.at(u, d);
      out.at(t, d) = gain * s / double(hi - lo + 1);
    }
  }
  return out;
}

}  // namespace

// ---- NDR1 ----------------------------------------------------------------------

TEST(Ndr, MinimalRoundTrip) {
  const auto dir = scratch_dir("ndr_min");
  save_ndr(tiny(), dir / "a.ndr");
  EXPECT_EQ(load_ndr(dir / "a.ndr"), tiny());
  // header 20 bytes + 2 spike bytes + 4 floats
  EXPECT_EQ(std::filesystem::file_size(dir / "a.ndr"), 20u + 2 + 16);
}

TEST(Ndr, LayoutIsLittleEndian) {
  const auto dir = scratch_dir("ndr_layout");
  save_ndr(tiny(), dir / "a.ndr");
  const std::string b = read_bytes(dir / "a.ndr");
  EXPECT_EQ(b.substr(0, 4), "NDR1");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);  // channels
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 4000 & 0xff);
  EXPECT_EQ(static_cast<unsigned char>(b[9]), 4000 >> 8);
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 2);  // steps
  EXPECT_EQ(static_cast<unsigned char>(b[20]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[21]), 0);
  float vy;
  std::memcpy(&vy, b.data() + 22 + 12, 4);
  EXPECT_EQ(vy, -1.0f);
}

TEST(Ndr, SyntheticRoundTripIsBitExact) {
  const auto dir = scratch_dir("ndr_synth");
  Rng rng(1);
  const Recording r = synth_reaching(rng, 10.0, 12);
  save_ndr(r, dir / "s.ndr");
  EXPECT_EQ(load_ndr(dir / "s.ndr"), r);
  save_ndr(load_ndr(dir / "s.ndr"), dir / "t.ndr");
  EXPECT_EQ(read_bytes(dir / "s.ndr"), read_bytes(dir / "t.ndr"));
}

TEST(Ndr, TruncatedVelocityBlockNamesLengths) {
  const auto dir = scratch_dir("ndr_trunc");
  save_ndr(tiny(), dir / "a.ndr");
  std::string b = read_bytes(dir / "a.ndr");
  b.resize(b.size() - 3);
  write_bytes(dir / "a.ndr", b);
  try {
    load_ndr(dir / "a.ndr");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::truncated);
    const std::string what = e.what();
    EXPECT_NE(what.find("16"), std::string::npos) << what;
    EXPECT_NE(what.find("13"), std::string::npos) << what;
  }
}

TEST(Ndr, DistinctErrors) {
  const auto dir = scratch_dir("ndr_err");
  write_bytes(dir / "magic.ndr", std::string("NDR2") + std::string(16, '\0'));
  EXPECT_EQ(parse_kind(dir / "magic.ndr"), ParseError::Kind::bad_magic);

  std::string huge = "NDR1";
  huge += std::string("\x60\x00\x00\x00", 4);          // 96 channels
  huge += std::string("\xa0\x0f\x00\x00", 4);          // 4000 us
  huge += std::string("\xff\xff\xff\xff\xff\xff\xff\x7f", 8);
  write_bytes(dir / "huge.ndr", huge);
  EXPECT_EQ(parse_kind(dir / "huge.ndr"), ParseError::Kind::overflow);

  write_bytes(dir / "short.ndr", "NDR1\x01");
  EXPECT_EQ(parse_kind(dir / "short.ndr"), ParseError::Kind::truncated);

  EXPECT_EQ(parse_kind(dir / "absent.ndr"), ParseError::Kind::io);
}

TEST(Ndr, OneWindowFixture) {
  const auto dir = scratch_dir("ndr_window");
  Rng rng(2);
  Recording r;
  r.channels = 96;
  r.spikes.resize(96 * 1024);
  r.velocities.resize(2 * 1024);
  for (auto& s : r.spikes) s = static_cast<std::uint8_t>(rng.poisson(0.2));
  for (auto& v : r.velocities) v = static_cast<float>(rng.uniform(-1, 1));
  save_ndr(r, dir / "w.ndr");
  const auto windows = make_windows(load_ndr(dir / "w.ndr"), 1024);
  ASSERT_EQ(windows.size(), 1u);
  EXPECT_EQ(windows[0].x.shape(), (Tensor::Shape{96, 1024}));
  EXPECT_EQ(windows[0].y.shape(), (Tensor::Shape{1024, 2}));
  EXPECT_EQ(windows[0].x.at(5, 7), r.spikes[7 * 96 + 5]);
  EXPECT_EQ(windows[0].y.at(3, 1), r.velocities[7]);
}

TEST(Windows, HopAndRemainder) {
  Rng rng(3);
  const Recording r = synth_reaching(rng, 2500 * 0.004, 4);
  EXPECT_EQ(make_windows(r, 1024).size(), 2u);
  EXPECT_EQ(make_windows(r, 1024, 512).size(), 3u);
}

// ---- CSV ----------------------------------------------------------------------------

TEST(Csv, RoundTrip) {
  const auto dir = scratch_dir("csv");
  Rng rng(4);
  const Recording r = synth_reaching(rng, 2.0, 5);
  save_csv(r, dir / "r.csv");
  EXPECT_EQ(load_csv(dir / "r.csv"), r);
  EXPECT_EQ(load_recording(dir / "r.csv"), r);
  std::ifstream f(dir / "r.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "t,ch0,ch1,ch2,ch3,ch4,vx,vy");
}

TEST(Csv, RejectsMalformedRows) {
  const auto dir = scratch_dir("csv_bad");
  write_bytes(dir / "a.csv", "t,ch0,vx,vy\n0,1,0.5\n");
  EXPECT_THROW(load_csv(dir / "a.csv"), ParseError);
  write_bytes(dir / "b.csv", "t,ch0,vx,vy\n0,300,0.5,0\n");
  EXPECT_THROW(load_csv(dir / "b.csv"), ParseError);
  write_bytes(dir / "c.csv", "time,a,b\n");
  EXPECT_THROW(load_csv(dir / "c.csv"), ParseError);
}

// ---- synthetic generator -------------------------------------------------------------

TEST(Synth, DeterministicGivenSeed) {
  Rng a(5), b(5), c(6);
  const Recording ra = synth_reaching(a, 20.0, 16);
  EXPECT_EQ(ra, synth_reaching(b, 20.0, 16));
  EXPECT_NE(ra, synth_reaching(c, 20.0, 16));
  EXPECT_EQ(ra.steps(), 5000u);
  EXPECT_EQ(ra.bin_us, 4000u);
}

TEST(Synth, CountsWithinByteRange) {
  Rng rng(7);
  SynthParams p;
  p.base_hz = 50000.0;  // 200 expected spikes per bin, so clamping is exercised
  const Recording r = synth_reaching(rng, 4.0, 8, p);
  std::size_t at_cap = 0;
  for (auto s : r.spikes) at_cap += s == 255;
  EXPECT_GT(at_cap, 0u);
}

TEST(Synth, UntunedRateMatchesBaseline) {
  Rng rng(8);
  SynthParams p;
  p.mod_hz_per_unit = 0.0;
  const Recording r = synth_reaching(rng, 120.0, 32, p);
  double total = 0.0;
  for (auto s : r.spikes) total += s;
  const double n = double(r.spikes.size());
  const double mean = total / n, expected = p.base_hz * 0.004;
  const double sigma = std::sqrt(expected / n);
  EXPECT_NEAR(mean, expected, 3 * sigma);
}

TEST(Synth, UntunedPopulationCarriesNoVelocity) {
  Rng rng(9);
  SynthParams p;
  p.mod_hz_per_unit = 0.0;
  const Recording r = synth_reaching(rng, 240.0, 96, p);
  // the closed-form gain is undefined without tuning, so fit one on the first half
  const Tensor pv = population_vector(r, p.base_hz, 1.0, 31);
  const Tensor v = r.velocity_tensor();
  const std::size_t half = r.steps() / 2;
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < half; ++t) {
    for (std::size_t d = 0; d < 2; ++d) {
      num += pv.at(t, d) * v.at(t, d);
      den += pv.at(t, d) * pv.at(t, d);
    }
  }
  const double g = num / den;
  Tensor pred({r.steps() - half, 2}), target({r.steps() - half, 2});
  for (std::size_t t = half; t < r.steps(); ++t) {
    for (std::size_t d = 0; d < 2; ++d) {
      pred.at(t - half, d) = g * pv.at(t, d);
      target.at(t - half, d) = v.at(t, d);
    }
  }
  EXPECT_LT(std::abs(r2_score(pred, target)), 0.05);
}

TEST(Synth, PopulationVectorDecodesHeldOutSegment) {
  Rng rng(10);
  const SynthParams p;
  const Recording r = synth_reaching(rng, 20 * 60.0, 96, p);
  const Recording held = r.slice(r.steps() * 3 / 4, r.steps());
  const Tensor pred = population_vector(held, p.base_hz, p.mod_hz_per_unit, 31);
  const double r2 = r2_score(pred, held.velocity_tensor());
  EXPECT_GE(r2, 0.7);
}

TEST(Synth, RejectsBadArguments) {
  Rng rng(11);
  EXPECT_THROW(synth_reaching(rng, 0.0, 8), ConfigError);
  EXPECT_THROW(synth_reaching(rng, 1.0, 1), ConfigError);
}

// ---- split -------------------------------------------------------------------------

TEST(Split, DefaultFractions) {
  Rng rng(12);
  const Recording r = synth_reaching(rng, 8192 * 0.004, 4);
  ASSERT_EQ(r.steps(), 8192u);
  const auto parts = split(r, {});
  EXPECT_EQ(parts.train.steps(), 4096u);
  EXPECT_EQ(parts.val.steps(), 2048u);
  EXPECT_EQ(parts.test.steps(), 2048u);
}

TEST(Split, TooShortPartThrows) {
  Rng rng(13);
  const Recording r = synth_reaching(rng, 2048 * 0.004, 4);
  EXPECT_THROW(split(r, {}), ConfigError);
}

TEST(Split, PartsArePrefixPartition) {
  Rng rng(14);
  const Recording r = synth_reaching(rng, 9000 * 0.004, 4);
  const auto parts = split(r, {0.6, 0.2, 0.2});
  for (const Recording* p : {&parts.train, &parts.val, &parts.test}) {
    EXPECT_EQ(p->steps() % 1024, 0u);
  }
  std::size_t at = 0;
  for (const Recording* p : {&parts.train, &parts.val, &parts.test}) {
    EXPECT_EQ(*p, r.slice(at, at + p->steps()));
    at += p->steps();
  }
  EXPECT_LE(at, r.steps());
}

TEST(Split, RejectsBadFractions) {
  EXPECT_THROW((SplitSpec{0.5, 0.5, 0.5}.validate()), ConfigError);
  EXPECT_THROW((SplitSpec{1.2, -0.1, -0.1}.validate()), ConfigError);
}

// ---- interpolation oracle -----------------------------------------------------------

TEST(InterpOracle, StrideOneIsExact) {
  Rng rng(15);
  const Recording r = synth_reaching(rng, 8.0, 4);
  EXPECT_EQ(interp_oracle_r2(r.velocity_tensor(), 1), 1.0);
}

TEST(InterpOracle, LinearRampIsReproduced) {
  Tensor v({64, 2});
  for (std::size_t t = 0; t < 64; ++t) {
    v.at(t, 0) = 0.5 * double(t) - 3.0;
    v.at(t, 1) = -0.25 * double(t);
  }
  for (std::size_t s : {2u, 4u, 8u, 16u}) EXPECT_NEAR(interp_oracle_r2(v, s), 1.0, 1e-12);
}

TEST(InterpOracle, MonotoneInStride) {
  for (std::uint64_t seed : {16u, 17u, 18u}) {
    Rng rng(seed);
    const Tensor v = synth_reaching(rng, 15360 * 0.004, 4).velocity_tensor();
    const double r4 = interp_oracle_r2(v, 4), r8 = interp_oracle_r2(v, 8),
                 r16 = interp_oracle_r2(v, 16);
    EXPECT_GE(r4, r8);
    EXPECT_GE(r8, r16);
    EXPECT_LT(r16, 1.0);
  }
}

TEST(InterpOracle, SmoothSinusoidFollowsSamplingTheory) {
  // reconstruction error of a sinusoid grows with stride
  Tensor v({1024, 2});
  for (std::size_t t = 0; t < 1024; ++t) {
    v.at(t, 0) = std::sin(2 * std::numbers::pi * t / 64.0);
    v.at(t, 1) = std::cos(2 * std::numbers::pi * t / 100.0);
  }
  double prev = 1.0;
  for (std::size_t s : {1u, 2u, 4u, 8u, 16u}) {
    const double r2 = interp_oracle_r2(v, s);
    EXPECT_LE(r2, prev + 1e-15);
    prev = r2;
  }
}

TEST(InterpOracle, ReconstructionKeepsSampledPoints) {
  Rng rng(19);
  const Tensor v = synth_reaching(rng, 4.0, 4).velocity_tensor();
  const Tensor rec = interp_reconstruct(v, 8);
  ASSERT_EQ(rec.shape(), v.shape());
  for (std::size_t t = 0; t < v.dim(0); t += 8) {
    EXPECT_EQ(rec.at(t, 0), v.at(t, 0));
    EXPECT_EQ(rec.at(t, 1), v.at(t, 1));
  }
}
