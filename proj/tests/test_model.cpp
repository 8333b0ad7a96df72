#include <gtest/gtest.h>

#include "spikedec/error.hpp"
#include "spikedec/grad_check.hpp"
#include "spikedec/model.hpp"
#include "spikedec/train.hpp"
#include "support.hpp"

using namespace spikedec;
using spikedec::testing::random_counts;
using spikedec::testing::toy_config;

namespace {

const Recurrence kAll[] = {Recurrence::gru, Recurrence::lif, Recurrence::sgru};

Tensor as_tensor(const std::vector<double>& v) {
  Tensor t({v.size()});
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

// Loss sum(w * velocities) over the flattened parameter vector, with the
// analytic gradient from backward().
double model_grad_error(const ModelConfig& cfg, SpikeMode mode, std::uint64_t seed) {
  Rng rng(seed);
  const Model model = Model::initialize(cfg);
  const Tensor x = random_counts(cfg.input_channels, cfg.seq_len, rng, 0.8);
  const Tensor w = spikedec::testing::random_tensor({cfg.seq_len, 2}, rng);
  const ForwardOptions opts{mode, false};

  auto loss = [&](const Model& m) {
    const Tensor v = forward(m, x, opts).velocities;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * w[i];
    return s;
  };
  const ForwardResult r = forward(model, x, opts);
  const Tensor analytic = as_tensor(backward(model, r.cache, w).flatten());
  const Tensor p0 = as_tensor(model.params.flatten());
  return grad_check(
      [&](const Tensor& p) {
        Model m = model;
        m.params.assign(p.values());
        return loss(m);
      },
      analytic, p0);
}

}  // namespace

TEST(Preset, Track2StageLengths) {
  const auto cfg = preset(Track::track2, Recurrence::gru);
  EXPECT_EQ(cfg.stage_lengths(), (std::vector<std::size_t>{1024, 1028, 514, 514, 257}));
  EXPECT_EQ(cfg.keypoint_count(), 257u);
  EXPECT_EQ(cfg.keypoint_stride, 4u);
  EXPECT_EQ(cfg.hidden_size, 20u);
}

TEST(Preset, Track1StageLengths) {
  // conv(k=3, p=5) on 1024 gives 1024 + 10 - 3 + 1 = 1032
  const auto cfg = preset(Track::track1, Recurrence::lif);
  EXPECT_EQ(cfg.stage_lengths(), (std::vector<std::size_t>{1024, 1032, 516, 517, 258, 259, 129}));
  EXPECT_EQ(cfg.keypoint_count(), 129u);
  EXPECT_EQ(cfg.keypoint_stride, 8u);
  EXPECT_EQ(cfg.hidden_size, 64u);
}

TEST(Preset, EveryPresetCoversTheWindow) {
  for (Track t : {Track::track1, Track::track2}) {
    for (Recurrence r : kAll) {
      const auto cfg = preset(t, r);
      EXPECT_NO_THROW(cfg.validate());
      EXPECT_EQ((cfg.keypoint_count() - 1) * cfg.keypoint_stride, 1024u);
      EXPECT_EQ(cfg.recurrence, r);
    }
  }
}

TEST(Preset, NamesRoundTrip) {
  for (Recurrence r : kAll) EXPECT_EQ(parse_recurrence(to_string(r)), r);
  for (Track t : {Track::track1, Track::track2}) EXPECT_EQ(parse_track(to_string(t)), t);
  EXPECT_THROW(parse_recurrence("lstm"), ConfigError);
  EXPECT_THROW(parse_track("track3"), ConfigError);
}

TEST(Config, RejectsInconsistentStride) {
  auto cfg = preset(Track::track2, Recurrence::gru);
  cfg.keypoint_stride = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(Model::initialize(cfg), ConfigError);
}

TEST(Config, RejectsZeroSizes) {
  auto cfg = preset(Track::track2, Recurrence::gru);
  cfg.hidden_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = preset(Track::track2, Recurrence::gru);
  cfg.conv_blocks[0].out_channels = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ReceptiveField, Track2) {
  const auto rf = receptive_field(preset(Track::track2, Recurrence::gru));
  EXPECT_EQ(rf.size, 10u);
  EXPECT_EQ(rf.stride, 4u);
  EXPECT_EQ(rf.left_padding, 5u);
}

TEST(ReceptiveField, Track1) {
  const auto rf = receptive_field(preset(Track::track1, Recurrence::gru));
  EXPECT_EQ(rf.size, 64u);
  EXPECT_EQ(rf.stride, 8u);
}

TEST(ReceptiveField, SingleConvWithoutPooling) {
  ModelConfig cfg;
  cfg.input_channels = 2;
  cfg.seq_len = 6;
  cfg.conv_blocks = {{2, 3, 0, false}};
  cfg.keypoint_stride = 2;  // 6 -> 4 keypoints
  ASSERT_NO_THROW(cfg.validate());
  const auto rf = receptive_field(cfg);
  EXPECT_EQ(rf.size, 3u);
  EXPECT_EQ(rf.stride, 1u);
}

TEST(ParameterCount, Track2Gru) {
  // conv 10*96*3+10, conv 10*10*3+10, GRU 3*(10*20+20*20+20), readout 20*2+2
  EXPECT_EQ(parameter_count(preset(Track::track2, Recurrence::gru)), 2890u + 310 + 1860 + 42);
  EXPECT_EQ(Model::zeros(preset(Track::track2, Recurrence::gru)).parameter_count(), 5102u);
}

TEST(ParameterCount, Track1Gru) {
  EXPECT_EQ(parameter_count(preset(Track::track1, Recurrence::gru)),
            9248u + 6176 + 12320 + 18624 + 130);
}

TEST(ParameterCount, SpikingVariantsDropGateBiases) {
  // LIF: W 10x20 + V 20x20; sGRU: six bias-free matrices
  EXPECT_EQ(parameter_count(preset(Track::track2, Recurrence::lif)), 2890u + 310 + 600 + 42);
  EXPECT_EQ(parameter_count(preset(Track::track2, Recurrence::sgru)), 2890u + 310 + 1800 + 42);
}

TEST(ParameterCount, MatchesInstantiatedModel) {
  for (Track t : {Track::track1, Track::track2}) {
    for (Recurrence r : kAll) {
      const auto cfg = preset(t, r);
      EXPECT_EQ(Model::initialize(cfg).parameter_count(), parameter_count(cfg));
    }
  }
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  Rng rng(1);
  for (Recurrence r : kAll) {
    const auto cfg = preset(Track::track2, r);
    const Model m = Model::zeros(cfg);
    const auto out = forward(m, random_counts(96, 1024, rng), {});
    EXPECT_EQ(out.velocities, Tensor({1024, 2})) << to_string(r);
  }
}

TEST(Forward, OutputCoversTheWindow) {
  Rng rng(2);
  for (Track t : {Track::track1, Track::track2}) {
    for (Recurrence r : kAll) {
      const auto cfg = preset(t, r);
      const auto out = forward(Model::initialize(cfg), random_counts(96, 1024, rng), {});
      EXPECT_EQ(out.velocities.shape(), (Tensor::Shape{1024, 2}));
      EXPECT_EQ(out.keypoints.shape(), (Tensor::Shape{cfg.keypoint_count(), 2}));
    }
  }
}

TEST(Forward, MatchesLayerByLayerComposition) {
  Rng rng(3);
  const auto cfg = preset(Track::track2, Recurrence::gru);
  const Model m = Model::initialize(cfg);
  const Tensor x = random_counts(96, 1024, rng);

  Tensor h = x;
  for (const auto& conv : m.params.conv) {
    h = conv1d_forward(conv, h, Activation::relu).y;
    h = maxpool1d(h).y;
  }
  const Tensor features = h.transposed();  // [K x F]
  const auto& gru = std::get<GruParams>(m.params.recurrent);
  CellState st = gru_initial_state(cfg.hidden_size);
  Tensor keypoints({features.dim(0), 2});
  for (std::size_t j = 0; j < features.dim(0); ++j) {
    Tensor f({features.dim(1)});
    std::copy(features.row(j).begin(), features.row(j).end(), f.values().begin());
    st = gru_forward(gru, f, st).state;
    const Tensor y = linear_forward(m.params.readout, st.h).y;
    keypoints.at(j, 0) = y[0];
    keypoints.at(j, 1) = y[1];
  }
  const Tensor expected = lerp_upsample(keypoints, 4);

  const auto out = forward(m, x, {});
  ASSERT_EQ(out.velocities.shape(), expected.shape());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(out.velocities[i], expected[i], 1e-12);
  }
}

TEST(Forward, KeypointInstantsHoldKeypointValues) {
  Rng rng(4);
  for (Recurrence r : kAll) {
    const auto cfg = preset(Track::track2, r);
    const auto out = forward(Model::initialize(cfg), random_counts(96, 1024, rng), {});
    for (std::size_t j = 0; j + 1 < cfg.keypoint_count(); ++j) {
      EXPECT_EQ(out.velocities.at(j * 4, 0), out.keypoints.at(j, 0));
      EXPECT_EQ(out.velocities.at(j * 4, 1), out.keypoints.at(j, 1));
    }
  }
}

TEST(Forward, IsBitDeterministic) {
  Rng rng(5);
  const Tensor x = random_counts(96, 1024, rng);
  for (Recurrence r : kAll) {
    const Model a = Model::initialize(preset(Track::track2, r));
    const Model b = Model::initialize(preset(Track::track2, r));
    EXPECT_EQ(forward(a, x, {}).velocities, forward(b, x, {}).velocities);
  }
}

TEST(Forward, SeedChangesInitialisation) {
  auto cfg = preset(Track::track2, Recurrence::gru);
  const Model a = Model::initialize(cfg);
  cfg.seed += 1;
  const Model b = Model::initialize(cfg);
  EXPECT_NE(a.params.flatten(), b.params.flatten());
}

TEST(Forward, ChannelMismatchThrows) {
  const Model m = Model::zeros(preset(Track::track2, Recurrence::gru));
  EXPECT_THROW(forward(m, Tensor({95, 1024}), {}), DimensionError);
  EXPECT_THROW(forward(m, Tensor({96, 1000}), {}), DimensionError);
}

TEST(Forward, TraceRecordsEverySynapticLayer) {
  Rng rng(6);
  const Model m = Model::initialize(preset(Track::track2, Recurrence::sgru));
  const auto out = forward(m, random_counts(96, 1024, rng), {SpikeMode::hard, true});
  ASSERT_FALSE(out.trace.synaptic.empty());
  EXPECT_EQ(out.trace.synaptic.front().layer, "conv0");
  EXPECT_EQ(out.trace.synaptic.back().layer, "readout");
  EXPECT_FALSE(out.trace.activations.empty());
  for (const auto& e : out.trace.synaptic) {
    if (e.layer == "readout") {
      EXPECT_TRUE(e.binary);
    }
  }
}

TEST(Params, FlattenAssignRoundTrip) {
  Model m = Model::initialize(toy_config(Recurrence::sgru));
  const auto flat = m.params.flatten();
  EXPECT_EQ(flat.size(), m.parameter_count());
  Model z = Model::zeros(m.config);
  z.params.assign(flat);
  EXPECT_EQ(z.params.flatten(), flat);
  std::vector<double> short_flat(flat.begin(), flat.end() - 1);
  EXPECT_THROW(z.params.assign(short_flat), DimensionError);
}

TEST(Sweep, KeypointConfigs) {
  const std::pair<std::size_t, std::size_t> cases[] = {{1025, 1}, {513, 2}, {257, 4}, {129, 8}};
  for (auto [k, s] : cases) {
    const auto cfg = keypoint_sweep_config(k, Recurrence::gru);
    EXPECT_EQ(cfg.keypoint_count(), k);
    EXPECT_EQ(cfg.keypoint_stride, s);
    EXPECT_NO_THROW(cfg.validate());
  }
  EXPECT_THROW(keypoint_sweep_config(300, Recurrence::gru), ConfigError);
}

TEST(Sweep, SizeConfigsKeepTrack2Geometry) {
  const auto cfg = size_sweep_config(32, 64, Recurrence::lif);
  EXPECT_EQ(cfg.keypoint_count(), 257u);
  EXPECT_EQ(cfg.hidden_size, 64u);
  for (const auto& b : cfg.conv_blocks) EXPECT_EQ(b.out_channels, 32u);
}

TEST(ModelBackward, GruMatchesFiniteDifferences) {
  EXPECT_LT(model_grad_error(toy_config(Recurrence::gru), SpikeMode::hard, 7), 1e-6);
}

TEST(ModelBackward, LifRelaxationMatchesFiniteDifferences) {
  EXPECT_LT(model_grad_error(toy_config(Recurrence::lif), SpikeMode::relaxed, 8), 1e-5);
}

TEST(ModelBackward, SgruRelaxationMatchesFiniteDifferences) {
  EXPECT_LT(model_grad_error(toy_config(Recurrence::sgru), SpikeMode::relaxed, 9), 1e-5);
}

TEST(ModelBackward, WithoutPoolingMatchesFiniteDifferences) {
  ModelConfig cfg = toy_config(Recurrence::gru);
  cfg.conv_blocks = {{3, 3, 1, false}, {2, 2, 0, true}};
  cfg.seq_len = 12;  // 12 -> 12 -> 11 -> 5 keypoints
  cfg.keypoint_stride = 3;
  ASSERT_NO_THROW(cfg.validate());
  EXPECT_LT(model_grad_error(cfg, SpikeMode::hard, 10), 1e-6);
}
