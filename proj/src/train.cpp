#include "spikedec/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "spikedec/bench.hpp"
#include "spikedec/error.hpp"
#include "spikedec/parallel.hpp"
#include "spikedec/rng.hpp"

namespace spikedec {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

template <typename Params, typename Cache, typename Backward>
Tensor bptt(const Params& p, const std::vector<Cache>& caches, const std::vector<Tensor>& d_out,
            CellCarry carry, Params& grads, Backward step_backward) {
  const std::size_t steps = caches.size();
  const std::size_t in = p.input_size();
  Tensor d_features({steps, in});
  for (std::size_t t = steps; t-- > 0;) {
    Tensor dx({in});
    step_backward(p, caches[t], d_out[t], carry, grads, dx);
    std::copy(dx.values().begin(), dx.values().end(), d_features.row(t).begin());
  }
  return d_features;
}

Tensor predict(const Model& model, const Window& w) { return forward(model, w.x).velocities; }

double windows_r2(const Model& model, const std::vector<Window>& windows) {
  const std::size_t seq = model.config.seq_len;
  std::vector<Tensor> preds(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) { preds[i] = predict(model, windows[i]); });
  Tensor pred({windows.size() * seq, 2}), target({windows.size() * seq, 2});
  for (std::size_t i = 0; i < windows.size(); ++i) {
    std::copy(preds[i].values().begin(), preds[i].values().end(),
              pred.values().begin() + static_cast<std::ptrdiff_t>(i * seq * 2));
    std::copy(windows[i].y.values().begin(), windows[i].y.values().end(),
              target.values().begin() + static_cast<std::ptrdiff_t>(i * seq * 2));
  }
  return r2_score(pred, target);
}

}  // namespace

void TrainConfig::validate() const {
  // lr == 0 is accepted so a run can be used as a no-op baseline.
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (early_stop_patience < 1) throw ConfigError("early-stop patience must be at least 1");
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const double n = static_cast<double>(pred.size());
  LossResult out{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    out.value += e * e;
    out.grad[i] = 2.0 * e / n;
  }
  out.value /= n;
  return out;
}

ModelParams backward(const Model& model, const ForwardCache& cache, const Tensor& d_velocities) {
  const ModelConfig& cfg = model.config;
  const std::size_t steps = cache.readout.size();
  if (steps == 0 || cache.blocks.size() != model.params.conv.size()) {
    throw UsageError("backward: cache does not come from a forward pass of this model");
  }
  ModelParams grads = model.params.zeros_like();

  const Tensor dkp = lerp_upsample_backward(d_velocities, steps, cfg.keypoint_stride);
  std::vector<Tensor> d_out(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor dy({2});
    dy[0] = dkp.at(t, 0);
    dy[1] = dkp.at(t, 1);
    d_out[t] = Tensor({cfg.hidden_size});
    linear_backward(model.params.readout, cache.readout[t], dy, grads.readout, d_out[t]);
  }

  Tensor d_features = std::visit(
      overloaded{
          [&](const std::vector<GruCache>& cs) {
            return bptt(std::get<GruParams>(model.params.recurrent), cs, d_out,
                        gru_initial_carry(cfg.hidden_size), std::get<GruParams>(grads.recurrent),
                        gru_backward);
          },
          [&](const std::vector<LifCache>& cs) {
            return bptt(std::get<LifParams>(model.params.recurrent), cs, d_out,
                        lif_initial_carry(cfg.hidden_size), std::get<LifParams>(grads.recurrent),
                        lif_backward);
          },
          [&](const std::vector<SgruCache>& cs) {
            return bptt(std::get<SgruParams>(model.params.recurrent), cs, d_out,
                        sgru_initial_carry(cfg.hidden_size), std::get<SgruParams>(grads.recurrent),
                        sgru_backward);
          },
      },
      cache.recurrent);

  Tensor d = d_features.transposed();
  for (std::size_t b = cache.blocks.size(); b-- > 0;) {
    const ConvBlockCache& bc = cache.blocks[b];
    if (bc.pool) d = maxpool1d_backward(*bc.pool, d);
    if (b == 0) {
      conv1d_backward(model.params.conv[b], bc.conv, d, grads.conv[b], nullptr);
    } else {
      Tensor dx;
      conv1d_backward(model.params.conv[b], bc.conv, d, grads.conv[b], &dx);
      d = std::move(dx);
    }
  }
  return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

double evaluate_r2(const Model& model, const Recording& rec) {
  const auto windows = make_windows(rec, model.config.seq_len);
  if (windows.empty()) throw ConfigError("evaluate_r2: recording shorter than one window");
  return windows_r2(model, windows);
}

FitResult fit(const Model& initial, const Recording& train, const Recording& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t seq = initial.config.seq_len;
  const auto train_windows = make_windows(train, seq, cfg.window_hop);
  const auto val_windows = make_windows(val, seq);
  if (train_windows.empty()) throw ConfigError("fit: training set holds no full window");
  if (val_windows.empty()) throw ConfigError("fit: validation set holds no full window");
  if (train.channels != initial.config.input_channels) {
    throw DimensionError("fit: recording has " + std::to_string(train.channels) +
                         " channels, model expects " +
                         std::to_string(initial.config.input_channels));
  }

  Model model = initial;
  FitResult result{initial, {}, 0};
  double best_r2 = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  AdamState adam;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::vector<double>> item_grads(n);
      std::vector<double> item_loss(n);
      parallel_for(n, [&](std::size_t i) {
        const Window& w = train_windows[order[start + i]];
        auto out = forward(model, w.x);
        auto loss = mse_loss(out.velocities, w.y);
        item_loss[i] = loss.value;
        item_grads[i] = backward(model, out.cache, loss.grad).flatten();
      });
      std::vector<double> g(item_grads[0].size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        loss_sum += item_loss[i];
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += item_grads[i][k];
      }
      for (double& v : g) v /= static_cast<double>(n);
      std::vector<double> flat = model.params.flatten();
      adam_step(flat, g, adam, cfg);
      model.params.assign(flat);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    windows_r2(model, val_windows)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_r2 > best_r2) {
      best_r2 = rec.val_r2;
      result.best = model;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_r2\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_r2);
    os << buf;
  }
  return os.str();
}

}  // namespace spikedec
