#include "spikedec/cells.hpp"

#include <cmath>
#include <numbers>

#include "linalg.hpp"
#include "spikedec/error.hpp"
#include "spikedec/rng.hpp"

namespace spikedec {

using detail::add_mat_vec;
using detail::add_outer;
using detail::add_vec_mat;

namespace {

Tensor uniform_tensor(Tensor::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void check_input(const Tensor& x, std::size_t in, const char* cell) {
  if (x.size() != in) {
    throw DimensionError(std::string(cell) + ": input " + x.shape_string() + " does not match " +
                         std::to_string(in) + " input features");
  }
}

void check_hidden(const Tensor& h, std::size_t hidden, const char* cell) {
  if (h.size() != hidden) {
    throw DimensionError(std::string(cell) + ": state " + h.shape_string() + " does not match " +
                         std::to_string(hidden) + " hidden units");
  }
}

// One LIF population step: u' = beta*u + I - theta*s_prev, s = H(u' - theta).
void integrate(const LifSettings& lif, const LifPopulation& prev, const Tensor& current,
               SpikeMode mode, Tensor& u, Tensor& s) {
  const std::size_t n = current.size();
  u = Tensor({n});
  s = Tensor({n});
  for (std::size_t j = 0; j < n; ++j) {
    u[j] = lif.beta * prev.u[j] + current[j] - lif.theta * prev.s[j];
    s[j] = spike(u[j] - lif.theta, lif.surrogate_slope, mode);
  }
}

// Backward of `integrate`. `ds` is the gradient on s_t from outside the
// population; the carry adds what flows back from step t+1. Returns dL/dI_t
// and leaves in the carry the gradient destined for step t-1 (ds holds only
// the reset contribution; callers add recurrent contributions themselves).
Tensor integrate_backward(const LifSettings& lif, const Tensor& u, const Tensor& ds,
                          LifCarry& carry) {
  const std::size_t n = u.size();
  Tensor gu({n});
  for (std::size_t j = 0; j < n; ++j) {
    const double gs = ds[j] + carry.ds[j];
    gu[j] = gs * surrogate_derivative(u[j] - lif.theta, lif.surrogate_slope) +
            lif.beta * carry.du[j];
  }
  carry.du = gu;
  for (std::size_t j = 0; j < n; ++j) carry.ds[j] = -lif.theta * gu[j];
  return gu;
}

LifCarry zero_lif_carry(std::size_t hidden) { return {Tensor({hidden}), Tensor({hidden})}; }

LifPopulation zero_population(std::size_t hidden) { return {Tensor({hidden}), Tensor({hidden})}; }

}  // namespace

void LifSettings::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("LIF beta must lie in (0, 1]");
  if (!(theta > 0.0)) throw ConfigError("LIF threshold must be positive");
  if (!(surrogate_slope > 0.0)) throw ConfigError("surrogate slope must be positive");
}

double surrogate_derivative(double v, double slope) {
  const double a = std::numbers::pi * slope * v / 2.0;
  return (slope / 2.0) / (1.0 + a * a);
}

Tensor surrogate_grad(const Tensor& u_minus_theta, double slope) {
  Tensor out = u_minus_theta;
  for (double& v : out.values()) v = surrogate_derivative(v, slope);
  return out;
}

double relaxed_spike(double v, double slope) {
  return 0.5 + std::atan(std::numbers::pi * slope * v / 2.0) / std::numbers::pi;
}

double spike(double v, double slope, SpikeMode mode) {
  return mode == SpikeMode::hard ? heaviside(v) : relaxed_spike(v, slope);
}

// ---- parameter holders ----------------------------------------------------

GruParams GruParams::zeros(std::size_t in, std::size_t hidden) {
  GruParams p;
  p.W_z = p.W_r = p.W_h = Tensor({in, hidden});
  p.U_z = p.U_r = p.U_h = Tensor({hidden, hidden});
  p.b_z = p.b_r = p.b_h = Tensor({hidden});
  return p;
}

GruParams GruParams::random(std::size_t in, std::size_t hidden, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruParams p;
  p.W_z = uniform_tensor({in, hidden}, k, rng);
  p.W_r = uniform_tensor({in, hidden}, k, rng);
  p.W_h = uniform_tensor({in, hidden}, k, rng);
  p.U_z = uniform_tensor({hidden, hidden}, k, rng);
  p.U_r = uniform_tensor({hidden, hidden}, k, rng);
  p.U_h = uniform_tensor({hidden, hidden}, k, rng);
  p.b_z = uniform_tensor({hidden}, k, rng);
  p.b_r = uniform_tensor({hidden}, k, rng);
  p.b_h = uniform_tensor({hidden}, k, rng);
  return p;
}

std::size_t GruParams::parameter_count() const {
  const std::size_t in = input_size(), h = hidden_size();
  return 3 * (in * h + h * h + h);
}

LifParams LifParams::zeros(std::size_t in, std::size_t hidden, LifSettings lif) {
  return {Tensor({in, hidden}), Tensor({hidden, hidden}), lif};
}

LifParams LifParams::random(std::size_t in, std::size_t hidden, LifSettings lif, Rng& rng) {
  LifParams p;
  // Same concern as the sGRU gates: a population that never fires passes no gradient.
  p.W = uniform_tensor({in, hidden}, kLifInputGain / std::sqrt(static_cast<double>(in)), rng);
  p.V = uniform_tensor({hidden, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.lif = lif;
  return p;
}

std::size_t LifParams::parameter_count() const {
  return input_size() * hidden_size() + hidden_size() * hidden_size();
}

SgruParams SgruParams::zeros(std::size_t in, std::size_t hidden, LifSettings lif) {
  SgruParams p;
  p.W_r = p.W_z = p.W_h = Tensor({in, hidden});
  p.U_r = p.U_z = p.U_h = Tensor({hidden, hidden});
  p.gate_r = p.gate_z = p.gate_h = lif;
  return p;
}

SgruParams SgruParams::random(std::size_t in, std::size_t hidden, LifSettings lif, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  // A silent gate population has no gradient path back into h (z = 0 and a
  // zero candidate), so the input weights start large enough to fire.
  const double kin = kSgruInputGain / std::sqrt(static_cast<double>(in));
  SgruParams p;
  p.W_r = uniform_tensor({in, hidden}, kin, rng);
  p.W_z = uniform_tensor({in, hidden}, kin, rng);
  p.W_h = uniform_tensor({in, hidden}, kin, rng);
  p.U_r = uniform_tensor({hidden, hidden}, k, rng);
  p.U_z = uniform_tensor({hidden, hidden}, k, rng);
  p.U_h = uniform_tensor({hidden, hidden}, k, rng);
  p.gate_r = p.gate_z = p.gate_h = lif;
  return p;
}

std::size_t SgruParams::parameter_count() const {
  const std::size_t in = input_size(), h = hidden_size();
  return 3 * (in * h + h * h);
}

CellState gru_initial_state(std::size_t hidden) { return {Tensor({hidden}), {}}; }

CellState lif_initial_state(std::size_t hidden) {
  return {Tensor({hidden}), {zero_population(hidden)}};
}

CellState sgru_initial_state(std::size_t hidden) {
  return {Tensor({hidden}),
          {zero_population(hidden), zero_population(hidden), zero_population(hidden)}};
}

CellCarry gru_initial_carry(std::size_t hidden) { return {Tensor({hidden}), {}}; }

CellCarry lif_initial_carry(std::size_t hidden) {
  return {Tensor({hidden}), {zero_lif_carry(hidden)}};
}

CellCarry sgru_initial_carry(std::size_t hidden) {
  return {Tensor({hidden}),
          {zero_lif_carry(hidden), zero_lif_carry(hidden), zero_lif_carry(hidden)}};
}

// ---- GRU ------------------------------------------------------------------

CellStep<GruCache> gru_forward(const GruParams& p, const Tensor& x, const CellState& st) {
  const std::size_t hidden = p.hidden_size();
  check_input(x, p.input_size(), "gru");
  check_hidden(st.h, hidden, "gru");

  Tensor z = p.b_z, r = p.b_r, a = p.b_h;
  add_vec_mat(x.values(), p.W_z, z.values());
  add_vec_mat(st.h.values(), p.U_z, z.values());
  add_vec_mat(x.values(), p.W_r, r.values());
  add_vec_mat(st.h.values(), p.U_r, r.values());
  for (std::size_t j = 0; j < hidden; ++j) {
    z[j] = sigmoid(z[j]);
    r[j] = sigmoid(r[j]);
  }
  Tensor rh({hidden});
  for (std::size_t j = 0; j < hidden; ++j) rh[j] = r[j] * st.h[j];
  add_vec_mat(x.values(), p.W_h, a.values());
  add_vec_mat(rh.values(), p.U_h, a.values());
  Tensor cand({hidden});
  Tensor h({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    cand[j] = std::tanh(a[j]);
    h[j] = (1.0 - z[j]) * st.h[j] + z[j] * cand[j];
  }
  CellStep<GruCache> out;
  out.state.h = h;
  out.output = std::move(h);
  out.cache = {x, st.h, std::move(z), std::move(r), std::move(cand)};
  return out;
}

void gru_backward(const GruParams& p, const GruCache& c, const Tensor& d_output,
                  CellCarry& carry, GruParams& g, Tensor& dx) {
  const std::size_t hidden = p.hidden_size();
  Tensor dh({hidden}), dz({hidden}), da({hidden}), dh_prev({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    dh[j] = d_output[j] + carry.dh[j];
    dh_prev[j] = dh[j] * (1.0 - c.z[j]);
    dz[j] = dh[j] * (c.candidate[j] - c.h_prev[j]) * c.z[j] * (1.0 - c.z[j]);
    da[j] = dh[j] * c.z[j] * (1.0 - c.candidate[j] * c.candidate[j]);
  }
  Tensor rh({hidden});
  for (std::size_t j = 0; j < hidden; ++j) rh[j] = c.r[j] * c.h_prev[j];

  // candidate path
  add_outer(c.x.values(), da.values(), g.W_h);
  add_outer(rh.values(), da.values(), g.U_h);
  detail::add_into(da.values(), g.b_h.values());
  add_mat_vec(p.W_h, da.values(), dx.values());
  Tensor drh({hidden});
  add_mat_vec(p.U_h, da.values(), drh.values());
  Tensor dr({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    dh_prev[j] += drh[j] * c.r[j];
    dr[j] = drh[j] * c.h_prev[j] * c.r[j] * (1.0 - c.r[j]);
  }

  // update gate
  add_outer(c.x.values(), dz.values(), g.W_z);
  add_outer(c.h_prev.values(), dz.values(), g.U_z);
  detail::add_into(dz.values(), g.b_z.values());
  add_mat_vec(p.W_z, dz.values(), dx.values());
  add_mat_vec(p.U_z, dz.values(), dh_prev.values());

  // reset gate
  add_outer(c.x.values(), dr.values(), g.W_r);
  add_outer(c.h_prev.values(), dr.values(), g.U_r);
  detail::add_into(dr.values(), g.b_r.values());
  add_mat_vec(p.W_r, dr.values(), dx.values());
  add_mat_vec(p.U_r, dr.values(), dh_prev.values());

  carry.dh = std::move(dh_prev);
}

// ---- recurrent LIF --------------------------------------------------------

CellStep<LifCache> lif_forward(const LifParams& p, const Tensor& x, const CellState& st,
                               SpikeMode mode) {
  const std::size_t hidden = p.hidden_size();
  check_input(x, p.input_size(), "lif");
  if (st.pops.size() != 1) throw DimensionError("lif: state must hold one LIF population");
  const LifPopulation& prev = st.pops[0];
  check_hidden(prev.u, hidden, "lif");
  check_hidden(prev.s, hidden, "lif");

  Tensor current({hidden});
  add_vec_mat(x.values(), p.W, current.values());
  add_vec_mat(prev.s.values(), p.V, current.values());
  Tensor u, s;
  integrate(p.lif, prev, current, mode, u, s);

  CellStep<LifCache> out;
  out.state.h = s;
  out.state.pops = {{u, s}};
  out.output = s;
  out.cache = {x, prev.s, std::move(u), std::move(s)};
  return out;
}

void lif_backward(const LifParams& p, const LifCache& c, const Tensor& d_output, CellCarry& carry,
                  LifParams& g, Tensor& dx) {
  const std::size_t hidden = p.hidden_size();
  LifCarry& pc = carry.pops.at(0);
  Tensor gi = integrate_backward(p.lif, c.u, d_output, pc);
  add_outer(c.x.values(), gi.values(), g.W);
  add_outer(c.s_prev.values(), gi.values(), g.V);
  add_mat_vec(p.W, gi.values(), dx.values());
  Tensor ds_rec({hidden});
  add_mat_vec(p.V, gi.values(), ds_rec.values());
  detail::add_into(ds_rec.values(), pc.ds.values());
}

// ---- spiking GRU ----------------------------------------------------------

CellStep<SgruCache> sgru_forward(const SgruParams& p, const Tensor& x, const CellState& st,
                                 SpikeMode mode) {
  const std::size_t hidden = p.hidden_size();
  check_input(x, p.input_size(), "sgru");
  check_hidden(st.h, hidden, "sgru");
  if (st.pops.size() != 3) throw DimensionError("sgru: state must hold three LIF populations");

  Tensor ir({hidden}), iz({hidden}), ic({hidden});
  add_vec_mat(x.values(), p.W_r, ir.values());
  add_vec_mat(st.h.values(), p.U_r, ir.values());
  add_vec_mat(x.values(), p.W_z, iz.values());
  add_vec_mat(st.h.values(), p.U_z, iz.values());

  SgruCache cache;
  integrate(p.gate_r, st.pops[0], ir, mode, cache.u_r, cache.r);
  integrate(p.gate_z, st.pops[1], iz, mode, cache.u_z, cache.z);

  Tensor gated({hidden});
  for (std::size_t j = 0; j < hidden; ++j) gated[j] = (1.0 - cache.r[j]) * st.h[j];
  add_vec_mat(x.values(), p.W_h, ic.values());
  add_vec_mat(gated.values(), p.U_h, ic.values());
  integrate(p.gate_h, st.pops[2], ic, mode, cache.u_c, cache.candidate);

  Tensor h({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    h[j] = (1.0 - cache.z[j]) * st.h[j] + cache.z[j] * cache.candidate[j];
  }
  cache.x = x;
  cache.h_prev = st.h;
  cache.gated = std::move(gated);

  CellStep<SgruCache> out;
  out.state.h = h;
  out.state.pops = {{cache.u_r, cache.r}, {cache.u_z, cache.z}, {cache.u_c, cache.candidate}};
  out.output = std::move(h);
  out.cache = std::move(cache);
  return out;
}

void sgru_backward(const SgruParams& p, const SgruCache& c, const Tensor& d_output,
                   CellCarry& carry, SgruParams& g, Tensor& dx) {
  const std::size_t hidden = p.hidden_size();
  Tensor dh({hidden}), dz({hidden}), dc({hidden}), dh_prev({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    dh[j] = d_output[j] + carry.dh[j];
    dh_prev[j] = dh[j] * (1.0 - c.z[j]);
    dz[j] = dh[j] * (c.candidate[j] - c.h_prev[j]);
    dc[j] = dh[j] * c.z[j];
  }

  // candidate gate
  Tensor gc = integrate_backward(p.gate_h, c.u_c, dc, carry.pops[2]);
  add_outer(c.x.values(), gc.values(), g.W_h);
  add_outer(c.gated.values(), gc.values(), g.U_h);
  add_mat_vec(p.W_h, gc.values(), dx.values());
  Tensor dgated({hidden});
  add_mat_vec(p.U_h, gc.values(), dgated.values());
  Tensor dr({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    dh_prev[j] += dgated[j] * (1.0 - c.r[j]);
    dr[j] = -dgated[j] * c.h_prev[j];
  }

  // update gate
  Tensor gz = integrate_backward(p.gate_z, c.u_z, dz, carry.pops[1]);
  add_outer(c.x.values(), gz.values(), g.W_z);
  add_outer(c.h_prev.values(), gz.values(), g.U_z);
  add_mat_vec(p.W_z, gz.values(), dx.values());
  add_mat_vec(p.U_z, gz.values(), dh_prev.values());

  // reset gate
  Tensor gr = integrate_backward(p.gate_r, c.u_r, dr, carry.pops[0]);
  add_outer(c.x.values(), gr.values(), g.W_r);
  add_outer(c.h_prev.values(), gr.values(), g.U_r);
  add_mat_vec(p.W_r, gr.values(), dx.values());
  add_mat_vec(p.U_r, gr.values(), dh_prev.values());

  carry.dh = std::move(dh_prev);
}

}  // namespace spikedec
