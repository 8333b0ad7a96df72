#pragma once

// Recurrent units: a standard GRU, a recurrent leaky integrate-and-fire layer
// and the spiking GRU whose gates are LIF populations.
//
// All three step one input vector at a time. Forward returns the new state, the
// unit's output and a cache; backward consumes the cache in reverse time order
// and threads a CellCarry holding the gradient that flows from step t+1 into
// step t.

#include <cstddef>
#include <vector>

#include "spikedec/tensor.hpp"

namespace spikedec {

class Rng;

/// How the threshold nonlinearity is evaluated in the forward pass. `hard`
/// emits binary spikes. `relaxed` replaces the step by the antiderivative of
/// the surrogate, which makes the forward pass smooth so finite differences
/// can check the surrogate backward exactly.
enum class SpikeMode { hard, relaxed };

struct LifSettings {
  double beta = 0.9;             // membrane decay per step, in (0, 1]
  double theta = 1.0;            // firing threshold
  double surrogate_slope = 2.0;  // arctan surrogate sharpness

  void validate() const;
  friend bool operator==(const LifSettings&, const LifSettings&) = default;
};

/// Arctan surrogate for d/dv heaviside(v): (slope/2) / (1 + (pi*slope*v/2)^2).
/// Integrates to one over the real line and peaks at slope/2.
double surrogate_derivative(double v, double slope);
Tensor surrogate_grad(const Tensor& u_minus_theta, double slope);
/// Antiderivative of the surrogate: 1/2 + atan(pi*slope*v/2)/pi.
double relaxed_spike(double v, double slope);
double spike(double v, double slope, SpikeMode mode);

struct GruParams {
  Tensor W_z, W_r, W_h;  // [in x hidden]
  Tensor U_z, U_r, U_h;  // [hidden x hidden]
  Tensor b_z, b_r, b_h;  // [hidden]

  static GruParams zeros(std::size_t in, std::size_t hidden);
  static GruParams random(std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t input_size() const { return W_z.dim(0); }
  std::size_t hidden_size() const { return W_z.dim(1); }
  std::size_t parameter_count() const;
};

struct LifParams {
  Tensor W;  // [in x hidden] input weights
  Tensor V;  // [hidden x hidden] recurrent weights on the previous spikes
  LifSettings lif;

  static LifParams zeros(std::size_t in, std::size_t hidden, LifSettings lif = {});
  static LifParams random(std::size_t in, std::size_t hidden, LifSettings lif, Rng& rng);
  std::size_t input_size() const { return W.dim(0); }
  std::size_t hidden_size() const { return W.dim(1); }
  std::size_t parameter_count() const;
};

/// Scale of the spiking input weights at initialisation, relative to 1/sqrt(in).
/// Three conv blocks leave features small enough that a unit-gain LIF layer
/// stays silent.
inline constexpr double kLifInputGain = 4.0;
inline constexpr double kSgruInputGain = 6.0;

/// Spiking GRU. Gates carry no biases.
///   r = LIF(W_r x + U_r h),  z = LIF(W_z x + U_z h)
///   c = LIF(W_h x + U_h ((1 - r) * h))
///   h' = (1 - z) * h + z * c
/// The candidate is gated by (1 - r), not r.
struct SgruParams {
  Tensor W_r, W_z, W_h;  // [in x hidden]
  Tensor U_r, U_z, U_h;  // [hidden x hidden]
  LifSettings gate_r, gate_z, gate_h;

  static SgruParams zeros(std::size_t in, std::size_t hidden, LifSettings lif = {});
  static SgruParams random(std::size_t in, std::size_t hidden, LifSettings lif, Rng& rng);
  std::size_t input_size() const { return W_r.dim(0); }
  std::size_t hidden_size() const { return W_r.dim(1); }
  std::size_t parameter_count() const;
};

/// Membrane potential after the latest step and the spikes it produced.
struct LifPopulation {
  Tensor u;
  Tensor s;
};

/// `h` is the hidden state (GRU, sGRU) or the latest spike vector (LIF).
/// `pops` holds one LIF population per spiking gate: none for GRU, one for
/// LIF, three (r, z, candidate) for sGRU.
struct CellState {
  Tensor h;
  std::vector<LifPopulation> pops;
};

CellState gru_initial_state(std::size_t hidden);
CellState lif_initial_state(std::size_t hidden);
CellState sgru_initial_state(std::size_t hidden);

struct GruCache {
  Tensor x, h_prev, z, r, candidate;
};

struct LifCache {
  Tensor x, s_prev, u, s;
};

struct SgruCache {
  Tensor x, h_prev, gated;  // gated = (1 - r) * h_prev
  Tensor u_r, u_z, u_c;
  Tensor r, z, candidate;
};

template <typename Cache>
struct CellStep {
  CellState state;
  Tensor output;
  Cache cache;
};

CellStep<GruCache> gru_forward(const GruParams& p, const Tensor& x, const CellState& st);
CellStep<LifCache> lif_forward(const LifParams& p, const Tensor& x, const CellState& st,
                               SpikeMode mode = SpikeMode::hard);
CellStep<SgruCache> sgru_forward(const SgruParams& p, const Tensor& x, const CellState& st,
                                 SpikeMode mode = SpikeMode::hard);

/// Gradient flowing from step t+1 back into step t.
struct LifCarry {
  Tensor du;  // dL/du_{t+1}
  Tensor ds;  // dL/ds_t through step t+1 (reset and recurrent weights)
};

struct CellCarry {
  Tensor dh;  // dL/dh_t through step t+1
  std::vector<LifCarry> pops;
};

CellCarry gru_initial_carry(std::size_t hidden);
CellCarry lif_initial_carry(std::size_t hidden);
CellCarry sgru_initial_carry(std::size_t hidden);

/// Backward of one step. `d_output` is the gradient on this step's output from
/// outside the recurrence. Accumulates into `grads` and `dx`, and replaces
/// `carry` with the gradient for step t-1.
void gru_backward(const GruParams& p, const GruCache& c, const Tensor& d_output,
                  CellCarry& carry, GruParams& grads, Tensor& dx);
void lif_backward(const LifParams& p, const LifCache& c, const Tensor& d_output,
                  CellCarry& carry, LifParams& grads, Tensor& dx);
void sgru_backward(const SgruParams& p, const SgruCache& c, const Tensor& d_output,
                   CellCarry& carry, SgruParams& grads, Tensor& dx);

}  // namespace spikedec
