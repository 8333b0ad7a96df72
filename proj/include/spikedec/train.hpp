#pragma once

// Full-window backpropagation through time and the training loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spikedec/data.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t window_hop = 0;  // 0: non-overlapping training windows

  void validate() const;
};

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

/// Mean squared error over all elements, gradient 2 (pred - target) / N.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// Reverse sweep through interpolation, readout, the recurrent unit (through
/// time) and the convolution blocks. Spiking thresholds use the surrogate
/// derivative. Returns gradients shaped like the model parameters.
ModelParams backward(const Model& model, const ForwardCache& cache, const Tensor& d_velocities);

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_r2 = 0.0;
};

struct FitResult {
  Model best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on shuffled windows of `train`, keeps the parameters with the best
/// validation R^2 and stops after `early_stop_patience` epochs without improvement.
FitResult fit(const Model& initial, const Recording& train, const Recording& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// R^2 over the concatenated non-overlapping windows of `rec`.
double evaluate_r2(const Model& model, const Recording& rec);

/// `epoch,train_loss,val_r2` with one row per epoch.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace spikedec
