#include "spikedec/model.hpp"

#include <algorithm>

#include "spikedec/error.hpp"
#include "spikedec/rng.hpp"

namespace spikedec {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_binary(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

Tensor stack_rows(const std::vector<Tensor>& rows, std::size_t width) {
  Tensor out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].values().begin(), rows[i].values().end(), out.row(i).begin());
  }
  return out;
}

Tensor row_tensor(const Tensor& m, std::size_t i) {
  auto r = m.row(i);
  return Tensor({r.size()}, std::vector<double>(r.begin(), r.end()));
}

}  // namespace

std::string to_string(Recurrence r) {
  switch (r) {
    case Recurrence::gru: return "gru";
    case Recurrence::lif: return "lif";
    case Recurrence::sgru: return "sgru";
  }
  return "?";
}

std::string to_string(Track t) { return t == Track::track1 ? "track1" : "track2"; }

Recurrence parse_recurrence(std::string_view name) {
  if (name == "gru") return Recurrence::gru;
  if (name == "lif") return Recurrence::lif;
  if (name == "sgru") return Recurrence::sgru;
  throw ConfigError("unknown recurrence '" + std::string(name) + "' (expected gru, lif or sgru)");
}

Track parse_track(std::string_view name) {
  if (name == "track1" || name == "t1" || name == "1") return Track::track1;
  if (name == "track2" || name == "t2" || name == "2") return Track::track2;
  throw ConfigError("unknown track '" + std::string(name) + "' (expected track1 or track2)");
}

// ---- configuration --------------------------------------------------------

std::vector<std::size_t> ModelConfig::stage_lengths() const {
  std::vector<std::size_t> out{seq_len};
  std::size_t len = seq_len;
  for (const auto& b : conv_blocks) {
    const long long next = static_cast<long long>(len) + 2 * static_cast<long long>(b.padding) -
                           static_cast<long long>(b.kernel) + 1;
    if (b.kernel == 0 || next < 1) {
      throw ConfigError("conv block (k=" + std::to_string(b.kernel) +
                        ", p=" + std::to_string(b.padding) + ") cannot process length " +
                        std::to_string(len));
    }
    len = static_cast<std::size_t>(next);
    out.push_back(len);
    if (b.pool) {
      if (len < 2) throw ConfigError("max pooling needs length >= 2, got " + std::to_string(len));
      len /= 2;
      out.push_back(len);
    }
  }
  return out;
}

std::size_t ModelConfig::keypoint_count() const { return stage_lengths().back(); }

std::size_t ModelConfig::feature_size() const {
  return conv_blocks.empty() ? input_channels : conv_blocks.back().out_channels;
}

void ModelConfig::validate() const {
  if (input_channels == 0 || seq_len == 0 || hidden_size == 0 || keypoint_stride == 0) {
    throw ConfigError("model sizes must be positive");
  }
  for (const auto& b : conv_blocks) {
    if (b.out_channels == 0 || b.kernel == 0) {
      throw ConfigError("conv block channels and kernel must be positive");
    }
  }
  if (recurrence != Recurrence::gru) lif.validate();
  const std::size_t k = keypoint_count();
  if (k < 2) throw ConfigError("conv stack yields " + std::to_string(k) + " keypoints, need >= 2");
  if ((k - 1) * keypoint_stride != seq_len) {
    throw ConfigError("conv stack yields " + std::to_string(k) + " keypoints; (K-1)*stride = " +
                      std::to_string((k - 1) * keypoint_stride) + " != seq_len " +
                      std::to_string(seq_len));
  }
}

ModelConfig preset(Track track, Recurrence recurrence) {
  ModelConfig cfg;
  cfg.recurrence = recurrence;
  if (track == Track::track1) {
    cfg.conv_blocks = {{32, 3, 5, true}, {32, 6, 3, true}, {32, 12, 6, true}};
    cfg.hidden_size = 64;
    cfg.keypoint_stride = 8;
  } else {
    cfg.conv_blocks = {{10, 3, 3, true}, {10, 3, 1, true}};
    cfg.hidden_size = 20;
    cfg.keypoint_stride = 4;
  }
  return cfg;
}

ModelConfig keypoint_sweep_config(std::size_t keypoints, Recurrence recurrence,
                                  std::size_t channels, std::size_t hidden) {
  ModelConfig cfg;
  cfg.recurrence = recurrence;
  cfg.hidden_size = hidden;
  const std::size_t c = channels;
  switch (keypoints) {
    case 1025:  // 1024 -> 1024 -> 1025
      cfg.conv_blocks = {{c, 3, 1, false}, {c, 4, 2, false}};
      cfg.keypoint_stride = 1;
      break;
    case 513:  // 1024 -> 1026 -> 513 -> 513
      cfg.conv_blocks = {{c, 3, 2, true}, {c, 3, 1, false}};
      cfg.keypoint_stride = 2;
      break;
    case 257:  // 1024 -> 1028 -> 514 -> 514 -> 257
      cfg.conv_blocks = {{c, 3, 3, true}, {c, 3, 1, true}};
      cfg.keypoint_stride = 4;
      break;
    case 129:  // ... -> 257 -> 258 -> 129
      cfg.conv_blocks = {{c, 3, 3, true}, {c, 3, 1, true}, {c, 4, 2, true}};
      cfg.keypoint_stride = 8;
      break;
    default:
      throw ConfigError("no sweep configuration for " + std::to_string(keypoints) +
                        " keypoints (supported: 1025, 513, 257, 129)");
  }
  return cfg;
}

ModelConfig size_sweep_config(std::size_t channels, std::size_t hidden, Recurrence recurrence) {
  ModelConfig cfg = preset(Track::track2, recurrence);
  for (auto& b : cfg.conv_blocks) b.out_channels = channels;
  cfg.hidden_size = hidden;
  return cfg;
}

ReceptiveField receptive_field(const ModelConfig& cfg) {
  ReceptiveField rf;
  for (const auto& b : cfg.conv_blocks) {
    rf.size += (b.kernel - 1) * rf.stride;
    rf.left_padding += b.padding * rf.stride;
    if (b.pool) {
      rf.size += rf.stride;
      rf.stride *= 2;
    }
  }
  return rf;
}

// ---- parameters -----------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i);
    out.emplace_back(prefix + ".kernel", &conv[i].kernel);
    out.emplace_back(prefix + ".bias", &conv[i].bias);
  }
  std::visit(overloaded{
                 [&](GruParams& p) {
                   out.emplace_back("rec.W_z", &p.W_z);
                   out.emplace_back("rec.W_r", &p.W_r);
                   out.emplace_back("rec.W_h", &p.W_h);
                   out.emplace_back("rec.U_z", &p.U_z);
                   out.emplace_back("rec.U_r", &p.U_r);
                   out.emplace_back("rec.U_h", &p.U_h);
                   out.emplace_back("rec.b_z", &p.b_z);
                   out.emplace_back("rec.b_r", &p.b_r);
                   out.emplace_back("rec.b_h", &p.b_h);
                 },
                 [&](LifParams& p) {
                   out.emplace_back("rec.W", &p.W);
                   out.emplace_back("rec.V", &p.V);
                 },
                 [&](SgruParams& p) {
                   out.emplace_back("rec.W_r", &p.W_r);
                   out.emplace_back("rec.W_z", &p.W_z);
                   out.emplace_back("rec.W_h", &p.W_h);
                   out.emplace_back("rec.U_r", &p.U_r);
                   out.emplace_back("rec.U_z", &p.U_z);
                   out.emplace_back("rec.U_h", &p.U_h);
                 },
             },
             recurrent);
  out.emplace_back("readout.W", &readout.W);
  out.emplace_back("readout.b", &readout.b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->tensors();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, t] : mutable_view) out.emplace_back(std::move(name), t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors()) n += t->size();
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& [name, t] : tensors()) {
    flat.insert(flat.end(), t->values().begin(), t->values().end());
  }
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("assign: " + std::to_string(flat.size()) + " values for " +
                         std::to_string(parameter_count()) + " parameters");
  }
  std::size_t off = 0;
  for (auto& [name, t] : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t->size(), t->values().begin());
    off += t->size();
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& [name, t] : out.tensors()) t->fill(0.0);
  return out;
}

Model Model::initialize(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Model m;
  m.config = cfg;
  std::size_t in = cfg.input_channels;
  for (const auto& b : cfg.conv_blocks) {
    m.params.conv.push_back(Conv1dParams::random(b.out_channels, in, b.kernel, b.padding, rng));
    in = b.out_channels;
  }
  switch (cfg.recurrence) {
    case Recurrence::gru: m.params.recurrent = GruParams::random(in, cfg.hidden_size, rng); break;
    case Recurrence::lif:
      m.params.recurrent = LifParams::random(in, cfg.hidden_size, cfg.lif, rng);
      break;
    case Recurrence::sgru:
      m.params.recurrent = SgruParams::random(in, cfg.hidden_size, cfg.lif, rng);
      break;
  }
  m.params.readout = LinearParams::random(cfg.hidden_size, 2, rng);
  return m;
}

Model Model::zeros(const ModelConfig& cfg) {
  Model m = initialize(cfg);
  m.params = m.params.zeros_like();
  return m;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  std::size_t in = cfg.input_channels;
  for (const auto& b : cfg.conv_blocks) {
    n += b.out_channels * in * b.kernel + b.out_channels;
    in = b.out_channels;
  }
  const std::size_t h = cfg.hidden_size;
  switch (cfg.recurrence) {
    case Recurrence::gru: n += 3 * (in * h + h * h + h); break;
    case Recurrence::lif: n += in * h + h * h; break;
    case Recurrence::sgru: n += 3 * (in * h + h * h); break;
  }
  return n + 2 * h + 2;
}

// ---- forward --------------------------------------------------------------

CellState initial_cell_state(const ModelConfig& cfg) {
  switch (cfg.recurrence) {
    case Recurrence::gru: return gru_initial_state(cfg.hidden_size);
    case Recurrence::lif: return lif_initial_state(cfg.hidden_size);
    case Recurrence::sgru: return sgru_initial_state(cfg.hidden_size);
  }
  return {};
}

Tensor conv_stack(const ModelParams& params, const ModelConfig& cfg, const Tensor& x) {
  Tensor h = x;
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    h = conv1d_forward(params.conv[b], h, Activation::relu).y;
    if (cfg.conv_blocks[b].pool) h = maxpool1d(h).y;
  }
  return h;
}

std::pair<CellState, Tensor> recurrent_readout_step(const Model& model, const Tensor& feature,
                                                    const CellState& state) {
  return std::visit(
      overloaded{
          [&](const GruParams& p) {
            auto step = gru_forward(p, feature, state);
            return std::pair{std::move(step.state),
                             linear_forward(model.params.readout, step.output).y};
          },
          [&](const LifParams& p) {
            auto step = lif_forward(p, feature, state, SpikeMode::hard);
            return std::pair{std::move(step.state),
                             linear_forward(model.params.readout, step.output).y};
          },
          [&](const SgruParams& p) {
            auto step = sgru_forward(p, feature, state, SpikeMode::hard);
            return std::pair{std::move(step.state),
                             linear_forward(model.params.readout, step.output).y};
          },
      },
      model.params.recurrent);
}

ForwardResult forward(const Model& model, const Tensor& x, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  if (x.rank() != 2 || x.dim(0) != cfg.input_channels || x.dim(1) != cfg.seq_len) {
    throw DimensionError("forward: input " + x.shape_string() + " does not match [" +
                         std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.seq_len) +
                         "]");
  }
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = options.mode;

  Tensor h = x;
  for (std::size_t b = 0; b < model.params.conv.size(); ++b) {
    auto conv = conv1d_forward(model.params.conv[b], h, Activation::relu);
    ConvBlockCache block{std::move(conv.cache), std::nullopt};
    h = std::move(conv.y);
    if (cfg.conv_blocks[b].pool) {
      auto pooled = maxpool1d(h);
      block.pool = std::move(pooled.cache);
      h = std::move(pooled.y);
    }
    cache.blocks.push_back(std::move(block));
  }
  cache.features = h.transposed();
  const std::size_t steps = cache.features.dim(0);

  CellState state = initial_cell_state(cfg);
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  auto run = [&](auto&& step_fn, auto& caches) {
    caches.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      auto step = step_fn(row_tensor(cache.features, t), state);
      state = std::move(step.state);
      outputs.push_back(std::move(step.output));
      caches.push_back(std::move(step.cache));
    }
  };
  std::visit(overloaded{
                 [&](const GruParams& p) {
                   auto& caches = cache.recurrent.emplace<std::vector<GruCache>>();
                   run([&](const Tensor& f, const CellState& s) { return gru_forward(p, f, s); },
                       caches);
                 },
                 [&](const LifParams& p) {
                   auto& caches = cache.recurrent.emplace<std::vector<LifCache>>();
                   run([&](const Tensor& f, const CellState& s) {
                     return lif_forward(p, f, s, options.mode);
                   },
                       caches);
                 },
                 [&](const SgruParams& p) {
                   auto& caches = cache.recurrent.emplace<std::vector<SgruCache>>();
                   run([&](const Tensor& f, const CellState& s) {
                     return sgru_forward(p, f, s, options.mode);
                   },
                       caches);
                 },
             },
             model.params.recurrent);

  std::vector<Tensor> kps;
  kps.reserve(steps);
  cache.readout.reserve(steps);
  for (const Tensor& o : outputs) {
    auto lin = linear_forward(model.params.readout, o);
    kps.push_back(std::move(lin.y));
    cache.readout.push_back(std::move(lin.cache));
  }
  cache.keypoints = stack_rows(kps, 2);
  result.keypoints = cache.keypoints;
  result.velocities = lerp_upsample(cache.keypoints, cfg.keypoint_stride);
  if (options.record_trace) result.trace = make_trace(model, cache);
  return result;
}

ActivationTrace make_trace(const Model& model, const ForwardCache& cache) {
  ActivationTrace trace;
  for (std::size_t b = 0; b < cache.blocks.size(); ++b) {
    const Tensor& in = cache.blocks[b].conv.input;
    // Spike counts above one are still events, so the input layer accumulates.
    trace.synaptic.push_back({"conv" + std::to_string(b), in, b == 0 || is_binary(in)});
  }
  auto add_rows = [&](const std::string& layer, const std::vector<Tensor>& rows) {
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    Tensor m = stack_rows(rows, width);
    const bool bin = is_binary(m);
    trace.synaptic.push_back({layer, std::move(m), bin});
  };
  auto activation = [&](const std::string& layer, const std::vector<Tensor>& rows) {
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    trace.activations.push_back({layer, stack_rows(rows, width)});
  };
  auto collect = [](const auto& caches, auto member) {
    std::vector<Tensor> rows;
    rows.reserve(caches.size());
    for (const auto& c : caches) rows.push_back(member(c));
    return rows;
  };

  std::vector<Tensor> readout_inputs;
  std::visit(
      overloaded{
          [&](const std::vector<GruCache>& cs) {
            add_rows("rec.input", collect(cs, [](const GruCache& c) { return c.x; }));
            add_rows("rec.hidden", collect(cs, [](const GruCache& c) { return c.h_prev; }));
            add_rows("rec.candidate", collect(cs, [](const GruCache& c) {
                       return ewise(Ewise::mul, c.r, c.h_prev);
                     }));
            activation("rec.h", collect(cs, [](const GruCache& c) {
                         Tensor h = c.h_prev;
                         for (std::size_t j = 0; j < h.size(); ++j) {
                           h[j] = (1.0 - c.z[j]) * c.h_prev[j] + c.z[j] * c.candidate[j];
                         }
                         return h;
                       }));
          },
          [&](const std::vector<LifCache>& cs) {
            add_rows("rec.input", collect(cs, [](const LifCache& c) { return c.x; }));
            add_rows("rec.recurrent", collect(cs, [](const LifCache& c) { return c.s_prev; }));
            activation("rec.spikes", collect(cs, [](const LifCache& c) { return c.s; }));
          },
          [&](const std::vector<SgruCache>& cs) {
            add_rows("rec.input", collect(cs, [](const SgruCache& c) { return c.x; }));
            add_rows("rec.hidden", collect(cs, [](const SgruCache& c) { return c.h_prev; }));
            add_rows("rec.candidate", collect(cs, [](const SgruCache& c) { return c.gated; }));
            activation("rec.r", collect(cs, [](const SgruCache& c) { return c.r; }));
            activation("rec.z", collect(cs, [](const SgruCache& c) { return c.z; }));
            activation("rec.c", collect(cs, [](const SgruCache& c) { return c.candidate; }));
          },
      },
      cache.recurrent);
  add_rows("readout", collect(cache.readout, [](const LinearCache& c) { return c.x; }));
  (void)model;
  return trace;
}

}  // namespace spikedec
