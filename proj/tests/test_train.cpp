#include <gtest/gtest.h>

#include <cmath>

#include "spikedec/error.hpp"
#include "spikedec/train.hpp"
#include "support.hpp"

using namespace spikedec;
using spikedec::testing::random_tensor;

namespace {

const Recurrence kAll[] = {Recurrence::gru, Recurrence::lif, Recurrence::sgru};

struct Data {
  Recording train, val;
};

const Data& synthetic() {
  static const Data d = [] {
    Rng rng(2024);
    const Recording r = synth_reaching(rng, 4 * 60.0, 96);
    auto parts = split(r, {});
    return Data{std::move(parts.train), std::move(parts.val)};
  }();
  return d;
}

double abs_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += std::abs(v);
  return s;
}

}  // namespace

TEST(Mse, EqualInputsGiveZero) {
  Rng rng(1);
  const Tensor a = random_tensor({1024, 2}, rng);
  const auto l = mse_loss(a, a);
  EXPECT_EQ(l.value, 0.0);
  EXPECT_EQ(l.grad, Tensor({1024, 2}));
}

TEST(Mse, UnitErrorGivesUnitLoss) {
  const Tensor a({1024, 2}, 1.0), b({1024, 2}, 0.0);
  const auto l = mse_loss(a, b);
  EXPECT_EQ(l.value, 1.0);
  EXPECT_EQ(l.grad[0], 2.0 / 2048);
}

TEST(Mse, MatchesScalarLoop) {
  Rng rng(2);
  const Tensor a = random_tensor({1024, 2}, rng), b = random_tensor({1024, 2}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 2048; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const auto l = mse_loss(a, b);
  EXPECT_NEAR(l.value, s / 2048, 1e-12);
  for (std::size_t i = 0; i < 2048; ++i) EXPECT_NEAR(l.grad[i], 2 * (a[i] - b[i]) / 2048, 1e-15);
}

TEST(Mse, ShapeMismatchThrows) {
  EXPECT_THROW(mse_loss(Tensor({1024, 2}), Tensor({1024, 3})), DimensionError);
}

TEST(Backward, ZeroUpstreamGradientGivesZeroGradients) {
  Rng rng(3);
  for (Recurrence r : kAll) {
    const Model m = Model::initialize(preset(Track::track2, r));
    const auto out = forward(m, spikedec::testing::random_counts(96, 1024, rng));
    for (double g : backward(m, out.cache, Tensor({1024, 2})).flatten()) ASSERT_EQ(g, 0.0);
  }
}

TEST(Backward, ForeignCacheIsRejected) {
  const Model m = Model::initialize(preset(Track::track2, Recurrence::gru));
  EXPECT_THROW(backward(m, ForwardCache{}, Tensor({1024, 2})), UsageError);
  const Model other = Model::initialize(preset(Track::track1, Recurrence::gru));
  Rng rng(4);
  const auto out = forward(other, spikedec::testing::random_counts(96, 1024, rng));
  EXPECT_THROW(backward(m, out.cache, Tensor({1024, 2})), UsageError);
}

TEST(Backward, EveryParameterReceivesGradient) {
  const auto windows = make_windows(synthetic().train, 1024);
  for (Track t : {Track::track1, Track::track2}) {
    for (Recurrence r : kAll) {
      const Model m = Model::initialize(preset(t, r));
      ModelParams total = m.params.zeros_like();
      for (std::size_t i = 0; i < 4; ++i) {
        const auto out = forward(m, windows[i].x);
        const auto loss = mse_loss(out.velocities, windows[i].y);
        const ModelParams g = backward(m, out.cache, loss.grad);
        auto dst = total.tensors();
        auto src = g.tensors();
        for (std::size_t k = 0; k < dst.size(); ++k) {
          for (std::size_t e = 0; e < dst[k].second->size(); ++e) {
            (*dst[k].second)[e] += std::abs((*src[k].second)[e]);
          }
        }
      }
      for (const auto& [name, tensor] : total.tensors()) {
        EXPECT_GT(abs_sum(*tensor), 0.0) << to_string(t) << "/" << to_string(r) << " " << name;
      }
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g = {0.0, 0.0};
  AdamState s;
  TrainConfig cfg;
  adam_step(p, g, s, cfg);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
  std::vector<double> p = {0.5};
  const std::vector<double> g = {1.0};
  AdamState s;
  TrainConfig cfg;
  cfg.lr = 0.1;
  adam_step(p, g, s, cfg);
  EXPECT_NEAR(0.5 - p[0], 0.1, 1e-8);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, MatchesHandExecutedUpdates) {
  TrainConfig cfg;
  cfg.lr = 0.01;
  std::vector<double> p = {0.3};
  AdamState s;
  double m = 0, v = 0, x = 0.3;
  const double gs[] = {0.5, -1.5, 2.0, 0.1};
  for (int t = 1; t <= 4; ++t) {
    const double g = gs[t - 1];
    adam_step(p, std::vector<double>{g}, s, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], x, 1e-15);
  }
}

TEST(Adam, IsDeterministic) {
  Rng rng(5);
  std::vector<double> g(50);
  for (double& v : g) v = rng.normal();
  std::vector<double> a(50, 1.0), b(50, 1.0);
  AdamState sa, sb;
  TrainConfig cfg;
  for (int i = 0; i < 10; ++i) {
    adam_step(a, g, sa, cfg);
    adam_step(b, g, sb, cfg);
  }
  EXPECT_EQ(a, b);
}

TEST(Adam, SizeMismatchThrows) {
  std::vector<double> p(3);
  AdamState s;
  EXPECT_THROW(adam_step(p, std::vector<double>(2), s, TrainConfig{}), DimensionError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = -1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.early_stop_patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Fit, ZeroLearningRateLeavesModelUnchanged) {
  const Model m = Model::initialize(preset(Track::track2, Recurrence::gru));
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  const auto r = fit(m, synthetic().train, synthetic().val, cfg);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best.params.flatten(), m.params.flatten());
  EXPECT_EQ(r.history[0].epoch, 1u);
}

TEST(Fit, EmptyTrainingSetThrows) {
  const Model m = Model::initialize(preset(Track::track2, Recurrence::gru));
  const Recording short_rec = synthetic().train.slice(0, 1000);
  EXPECT_THROW(fit(m, short_rec, synthetic().val, TrainConfig{}), ConfigError);
  EXPECT_THROW(fit(m, synthetic().train, short_rec, TrainConfig{}), ConfigError);
}

TEST(Fit, ChannelMismatchThrows) {
  auto cfg = preset(Track::track2, Recurrence::gru);
  cfg.input_channels = 32;
  EXPECT_THROW(fit(Model::initialize(cfg), synthetic().train, synthetic().val, TrainConfig{}),
               DimensionError);
}

TEST(Fit, TrainingLossDecreasesForFiveEpochs) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto mc = preset(Track::track2, Recurrence::gru);
    mc.seed = seed;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = seed;
    cfg.early_stop_patience = 5;
    const auto r = fit(Model::initialize(mc), synthetic().train, synthetic().val, cfg);
    ASSERT_EQ(r.history.size(), 5u);
    for (std::size_t e = 1; e < 5; ++e) {
      EXPECT_LT(r.history[e].train_loss, r.history[e - 1].train_loss) << "seed " << seed;
    }
  }
}

TEST(Fit, IsDeterministic) {
  const Model m = Model::initialize(preset(Track::track2, Recurrence::lif));
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  const auto a = fit(m, synthetic().train, synthetic().val, cfg);
  const auto b = fit(m, synthetic().train, synthetic().val, cfg);
  EXPECT_EQ(a.best.params.flatten(), b.best.params.flatten());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_r2, b.history[i].val_r2);
  }
}

TEST(Fit, EarlyStoppingKeepsBestEpoch) {
  const Model m = Model::initialize(preset(Track::track2, Recurrence::gru));
  TrainConfig cfg;
  cfg.lr = 0.0;  // validation R^2 never improves after epoch 1
  cfg.epochs = 10;
  cfg.early_stop_patience = 2;
  std::size_t calls = 0;
  const auto r = fit(m, synthetic().train, synthetic().val, cfg,
                     [&](const EpochRecord&) { ++calls; });
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(calls, 3u);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Fit, HistoryCsv) {
  const std::vector<EpochRecord> h = {{1, 0.5, 0.25}, {2, 0.125, 0.75}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,val_r2\n1,0.5,0.25\n2,0.125,0.75\n");
}
