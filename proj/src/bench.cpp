#include "spikedec/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>

#include "spikedec/error.hpp"
#include "spikedec/parallel.hpp"

namespace spikedec {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct MatrixLayer {
  std::vector<const Tensor*> matrices;  // each [fan_in x fan_out_i]
  std::size_t bias = 0;
};

std::map<std::string, MatrixLayer> matrix_layers(const ModelParams& p) {
  std::map<std::string, MatrixLayer> out;
  std::visit(overloaded{
                 [&](const GruParams& g) {
                   out["rec.input"] = {{&g.W_z, &g.W_r, &g.W_h}, 3 * g.hidden_size()};
                   out["rec.hidden"] = {{&g.U_z, &g.U_r}, 0};
                   out["rec.candidate"] = {{&g.U_h}, 0};
                 },
                 [&](const LifParams& l) {
                   out["rec.input"] = {{&l.W}, 0};
                   out["rec.recurrent"] = {{&l.V}, 0};
                 },
                 [&](const SgruParams& s) {
                   out["rec.input"] = {{&s.W_r, &s.W_z, &s.W_h}, 0};
                   out["rec.hidden"] = {{&s.U_r, &s.U_z}, 0};
                   out["rec.candidate"] = {{&s.U_h}, 0};
                 },
             },
             p.recurrent);
  out["readout"] = {{&p.readout.W}, p.readout.b.size()};
  return out;
}

LayerOps conv_ops(const Conv1dParams& p, const TraceEntry& e) {
  const Tensor& x = e.input;
  if (x.rank() != 2 || x.dim(0) != p.in_channels()) {
    throw UsageError("count_ops: trace entry " + e.layer + " has input " + x.shape_string() +
                     " but the layer expects " + std::to_string(p.in_channels()) + " channels");
  }
  const std::size_t in_ch = p.in_channels(), out_ch = p.out_channels(), k = p.kernel_size();
  const std::size_t len = x.dim(1), out_len = p.output_length(len);
  const long long pad = static_cast<long long>(p.padding);

  LayerOps ops{e.layer};
  ops.dense = static_cast<double>((out_ch * in_ch * k + out_ch) * out_len);
  double effective = 0.0;
  std::vector<std::size_t> prefix(len + 1);
  for (std::size_t c = 0; c < in_ch; ++c) {
    auto row = x.row(c);
    for (std::size_t m = 0; m < len; ++m) prefix[m + 1] = prefix[m] + (row[m] != 0.0 ? 1 : 0);
    for (std::size_t d = 0; d < k; ++d) {
      std::size_t nnz_w = 0;
      for (std::size_t o = 0; o < out_ch; ++o) nnz_w += p.kernel.at(o, c, d) != 0.0 ? 1 : 0;
      // output i reads input m = i + d - pad; valid m in [0, len), i in [0, out_len)
      const long long shift = static_cast<long long>(d) - pad;
      const long long lo = std::max<long long>(0, shift);
      const long long hi =
          std::min<long long>(static_cast<long long>(len), static_cast<long long>(out_len) + shift);
      if (hi <= lo) continue;
      effective += static_cast<double>(nnz_w * (prefix[hi] - prefix[lo]));
    }
  }
  (e.binary ? ops.acs : ops.macs) = effective;
  return ops;
}

LayerOps matrix_ops(const MatrixLayer& layer, const TraceEntry& e) {
  const Tensor& x = e.input;
  const std::size_t fan_in = layer.matrices.front()->dim(0);
  if (x.rank() != 2 || x.dim(1) != fan_in) {
    throw UsageError("count_ops: trace entry " + e.layer + " has input " + x.shape_string() +
                     " but the layer expects " + std::to_string(fan_in) + " inputs");
  }
  return count_matrix_ops(e.layer, layer.matrices, layer.bias, x, e.binary);
}

bool is_bias(const std::string& name) {
  return name.ends_with(".bias") || name.ends_with(".b") || name.find(".b_") != std::string::npos;
}

}  // namespace

LayerOps count_matrix_ops(const std::string& name, const std::vector<const Tensor*>& matrices,
                          std::size_t bias_elements, const Tensor& inputs, bool binary) {
  if (matrices.empty()) throw UsageError("count_matrix_ops: no weight matrices for " + name);
  const std::size_t fan_in = matrices.front()->dim(0);
  if (inputs.rank() != 2 || inputs.dim(1) != fan_in) {
    throw DimensionError("count_matrix_ops: inputs " + inputs.shape_string() + " do not feed " +
                         std::to_string(fan_in) + " rows");
  }
  std::size_t fan_out = 0;
  std::vector<std::size_t> row_nnz(fan_in, 0);
  for (const Tensor* m : matrices) {
    if (m->rank() != 2 || m->dim(0) != fan_in) {
      throw DimensionError("count_matrix_ops: matrix " + m->shape_string() + " in " + name +
                           " has the wrong fan-in");
    }
    fan_out += m->dim(1);
    for (std::size_t i = 0; i < fan_in; ++i) {
      for (double w : m->row(i)) row_nnz[i] += w != 0.0 ? 1 : 0;
    }
  }
  const std::size_t steps = inputs.dim(0);
  LayerOps ops{name};
  ops.dense = static_cast<double>((fan_in * fan_out + bias_elements) * steps);
  double effective = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    auto row = inputs.row(t);
    for (std::size_t i = 0; i < fan_in; ++i) {
      if (row[i] != 0.0) effective += static_cast<double>(row_nnz[i]);
    }
  }
  (binary ? ops.acs : ops.macs) = effective;
  return ops;
}

double r2_score(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "r2_score");
  if (target.rank() != 2 || target.dim(0) < 2) {
    throw DimensionError("r2_score: expects [T x D] with T >= 2, got " + target.shape_string());
  }
  const std::size_t steps = target.dim(0), width = target.dim(1);
  double sum = 0.0;
  for (std::size_t d = 0; d < width; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < steps; ++t) mean += target.at(t, d);
    mean /= static_cast<double>(steps);
    double sse = 0.0, sst = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double e = pred.at(t, d) - target.at(t, d);
      const double c = target.at(t, d) - mean;
      sse += e * e;
      sst += c * c;
    }
    if (sst == 0.0) {
      throw EvalError("r2_score: target dimension " + std::to_string(d) +
                      " is constant, variance undefined");
    }
    sum += 1.0 - sse / sst;
  }
  return sum / static_cast<double>(width);
}

std::size_t footprint_bytes(std::size_t parameter_elements, std::size_t buffer_elements) {
  return 4 * (parameter_elements + buffer_elements);
}

std::size_t state_elements(const ModelConfig& cfg) {
  const std::size_t h = cfg.hidden_size;
  switch (cfg.recurrence) {
    case Recurrence::gru: return h;
    case Recurrence::lif: return 2 * h;       // membrane + last spikes
    case Recurrence::sgru: return h + 6 * h;  // hidden + three gate populations
  }
  return 0;
}

std::size_t footprint(const Model& model) {
  const ModelConfig& cfg = model.config;
  return footprint_bytes(model.parameter_count(),
                         cfg.seq_len * cfg.input_channels + state_elements(cfg));
}

double connection_sparsity(const Model& model) {
  std::size_t zeros = 0, total = 0;
  for (const auto& [name, t] : model.params.tensors()) {
    if (is_bias(name)) continue;
    total += t->size();
    zeros += static_cast<std::size_t>(
        std::count(t->values().begin(), t->values().end(), 0.0));
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

ZeroCount activation_zeros(const ActivationTrace& trace) {
  ZeroCount zc;
  for (const auto& a : trace.activations) {
    zc.total += a.values.size();
    zc.zeros += static_cast<std::size_t>(
        std::count(a.values.values().begin(), a.values.values().end(), 0.0));
  }
  return zc;
}

double activation_sparsity(const ActivationTrace& trace) {
  const ZeroCount zc = activation_zeros(trace);
  if (zc.total == 0) throw ConfigError("activation_sparsity: trace holds no activations");
  return static_cast<double>(zc.zeros) / static_cast<double>(zc.total);
}

OpCounts count_ops(const Model& model, const ActivationTrace& trace) {
  const auto layers = matrix_layers(model.params);
  OpCounts counts;
  std::size_t conv_seen = 0;
  for (const TraceEntry& e : trace.synaptic) {
    LayerOps ops;
    if (e.layer.starts_with("conv")) {
      const std::size_t idx = std::stoul(e.layer.substr(4));
      if (idx >= model.params.conv.size()) {
        throw UsageError("count_ops: trace references missing layer " + e.layer);
      }
      ops = conv_ops(model.params.conv[idx], e);
      ++conv_seen;
    } else {
      const auto it = layers.find(e.layer);
      if (it == layers.end()) {
        throw UsageError("count_ops: layer " + e.layer + " does not exist in a " +
                         to_string(model.config.recurrence) + " model");
      }
      ops = matrix_ops(it->second, e);
    }
    counts.layers.push_back(ops);
  }
  if (conv_seen != model.params.conv.size() ||
      counts.layers.size() != conv_seen + layers.size()) {
    throw UsageError("count_ops: trace does not cover every synaptic layer exactly once");
  }
  const double per = static_cast<double>(model.config.seq_len);
  for (const auto& l : counts.layers) {
    counts.dense += l.dense;
    counts.macs += l.macs;
    counts.acs += l.acs;
  }
  counts.dense /= per;
  counts.macs /= per;
  counts.acs /= per;
  return counts;
}

BenchReport run_bench(const Model& model, const Recording& test,
                      std::vector<Tensor>* predictions) {
  if (test.channels != model.config.input_channels) {
    throw DimensionError("run_bench: recording has " + std::to_string(test.channels) +
                         " channels, model expects " +
                         std::to_string(model.config.input_channels));
  }
  const auto windows = make_windows(test, model.config.seq_len);
  if (windows.empty()) {
    throw ConfigError("run_bench: test recording is shorter than one window of " +
                      std::to_string(model.config.seq_len) + " bins");
  }
  struct PerWindow {
    Tensor pred;
    OpCounts ops;
    ZeroCount zeros;
  };
  std::vector<PerWindow> results(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    auto out = forward(model, windows[i].x, {SpikeMode::hard, true});
    results[i] = {std::move(out.velocities), count_ops(model, out.trace),
                  activation_zeros(out.trace)};
  });

  BenchReport report;
  report.footprint_bytes = footprint(model);
  report.connection_sparsity = connection_sparsity(model);
  const std::size_t seq = model.config.seq_len;
  Tensor pred({windows.size() * seq, 2}), target({windows.size() * seq, 2});
  ZeroCount zc;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    report.dense += results[i].ops.dense;
    report.macs += results[i].ops.macs;
    report.acs += results[i].ops.acs;
    zc.zeros += results[i].zeros.zeros;
    zc.total += results[i].zeros.total;
    std::copy(results[i].pred.values().begin(), results[i].pred.values().end(),
              pred.values().begin() + static_cast<std::ptrdiff_t>(i * seq * 2));
    std::copy(windows[i].y.values().begin(), windows[i].y.values().end(),
              target.values().begin() + static_cast<std::ptrdiff_t>(i * seq * 2));
    if (predictions) predictions->push_back(results[i].pred);
  }
  const double n = static_cast<double>(windows.size());
  report.dense /= n;
  report.macs /= n;
  report.acs /= n;
  report.activation_sparsity =
      zc.total == 0 ? 0.0 : static_cast<double>(zc.zeros) / static_cast<double>(zc.total);
  report.r2 = r2_score(pred, target);
  return report;
}

std::string report_to_json(const BenchReport& r) {
  const nlohmann::json j = {{"footprint_bytes", r.footprint_bytes},
                            {"connection_sparsity", r.connection_sparsity},
                            {"activation_sparsity", r.activation_sparsity},
                            {"dense", r.dense},
                            {"macs", r.macs},
                            {"acs", r.acs},
                            {"r2", r.r2}};
  return j.dump(2);
}

BenchReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    BenchReport r;
    r.footprint_bytes = j.at("footprint_bytes").get<std::size_t>();
    r.connection_sparsity = j.at("connection_sparsity").get<double>();
    r.activation_sparsity = j.at("activation_sparsity").get<double>();
    r.dense = j.at("dense").get<double>();
    r.macs = j.at("macs").get<double>();
    r.acs = j.at("acs").get<double>();
    r.r2 = j.at("r2").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad bench report: ") + e.what());
  }
}

std::string report_csv_header() {
  return "footprint_bytes,connection_sparsity,activation_sparsity,dense,macs,acs,r2";
}

std::string report_csv_row(const BenchReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.footprint_bytes,
                r.connection_sparsity, r.activation_sparsity, r.dense, r.macs, r.acs, r.r2);
  return buf;
}

}  // namespace spikedec
