#include "spikedec/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikedec/bench.hpp"
#include "spikedec/checkpoint.hpp"
#include "spikedec/data.hpp"
#include "spikedec/error.hpp"
#include "spikedec/model.hpp"
#include "spikedec/rng.hpp"
#include "spikedec/stream.hpp"
#include "spikedec/train.hpp"

namespace spikedec {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRecordingFormats =
    "Recording formats:\n"
    "  .ndr  binary, little-endian: \"NDR1\", u32 channels, u32 bin width in us,\n"
    "        u64 steps, then steps x channels u8 spike counts (time-major),\n"
    "        then steps x 2 float32 velocities (vx, vy).\n"
    "  .csv  header t,ch0..chN,vx,vy; one row per bin, t is the bin index.\n"
    "A --data directory must hold train.ndr, val.ndr and test.ndr (as written by\n"
    "`spikedec synth`); a single file is split 50/25/25 in time order.\n";

constexpr const char* kCheckpointFormat =
    "Checkpoint format (--ckpt PREFIX):\n"
    "  PREFIX.manifest.json  {format, version, config, tensors: [{name, shape,\n"
    "                         offset, count}], blob_elements}\n"
    "  PREFIX.weights.bin    float32 little-endian values in manifest order.\n";

constexpr const char* kReportFormat =
    "Report format: JSON object with keys footprint_bytes, connection_sparsity,\n"
    "activation_sparsity, dense, macs, acs, r2. Dense/MACs/ACs are per input bin.\n"
    "The CSV form has the same keys as its header row.\n";

constexpr const char* kPredictionFormat =
    "Prediction CSV: header window,t,pred_vx,pred_vy,true_vx,true_vy; one row per\n"
    "bin, t counts bins within the window.\n";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(ParseError::Kind::io, "cannot write " + path.string());
  f << text;
  if (!f) throw ParseError(ParseError::Kind::io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SplitParts load_parts(const fs::path& data) {
  if (fs::is_directory(data)) {
    return {load_recording(data / "train.ndr"), load_recording(data / "val.ndr"),
            load_recording(data / "test.ndr")};
  }
  return split(load_recording(data), SplitSpec{});
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  std::size_t channels = 96;
  double seconds = 1200.0;
  std::uint64_t seed = 0;
  bool csv = false;
  SynthParams params;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Rng rng(a.seed);
  const Recording rec = synth_reaching(rng, a.seconds, a.channels, a.params);
  const SplitParts parts = split(rec, SplitSpec{});
  fs::create_directories(a.out);
  save_ndr(rec, a.out / "recording.ndr");
  save_ndr(parts.train, a.out / "train.ndr");
  save_ndr(parts.val, a.out / "val.ndr");
  save_ndr(parts.test, a.out / "test.ndr");
  if (a.csv) save_csv(rec, a.out / "recording.csv");
  out << "wrote " << rec.steps() << " bins x " << rec.channels << " channels to "
      << a.out.string() << " (train " << parts.train.steps() << ", val " << parts.val.steps()
      << ", test " << parts.test.steps() << ")\n";
  return kExitOk;
}

// ---- model selection shared by train and sweep --------------------------------

struct ModelArgs {
  std::string track = "track2";
  std::string recurrence = "gru";
  std::size_t keypoints = 0;  // 0: preset geometry
  std::string size;           // "CxH", empty: preset widths
  std::uint64_t seed = 0;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw UsageError("size '" + text + "' is not of the form CxH");
  try {
    std::size_t used = 0;
    const std::string c = text.substr(0, x), h = text.substr(x + 1);
    const unsigned long channels = std::stoul(c, &used);
    if (used != c.size()) throw UsageError("bad size '" + text + "'");
    const unsigned long hidden = std::stoul(h, &used);
    if (used != h.size()) throw UsageError("bad size '" + text + "'");
    if (channels == 0 || hidden == 0) throw UsageError("size '" + text + "' must be positive");
    return {channels, hidden};
  } catch (const std::logic_error&) {
    throw UsageError("size '" + text + "' is not of the form CxH");
  }
}

ModelConfig model_config(const ModelArgs& a, std::size_t input_channels) {
  const Recurrence rec = parse_recurrence(a.recurrence);
  ModelConfig cfg;
  if (a.keypoints != 0 && !a.size.empty()) {
    throw UsageError("--keypoints and --size cannot be combined");
  }
  if (a.keypoints != 0) {
    cfg = keypoint_sweep_config(a.keypoints, rec);
  } else if (!a.size.empty()) {
    const auto [c, h] = parse_size(a.size);
    cfg = size_sweep_config(c, h, rec);
  } else {
    cfg = preset(parse_track(a.track), rec);
  }
  cfg.input_channels = input_channels;
  cfg.seed = a.seed;
  cfg.validate();
  return cfg;
}

struct TrainArgs {
  ModelArgs model;
  fs::path data;
  fs::path ckpt;
  fs::path history;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch = 8;
  std::size_t patience = 10;
};

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig tc;
  tc.lr = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.early_stop_patience = a.patience;
  tc.seed = a.model.seed;
  tc.validate();
  return tc;
}

FitResult train_model(const ModelConfig& cfg, const SplitParts& parts, const TrainConfig& tc,
                      std::ostream& out) {
  return fit(Model::initialize(cfg), parts.train, parts.val, tc, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " train_loss " << fmt_short(e.train_loss) << " val_r2 "
        << fmt_short(e.val_r2) << "\n"
        << std::flush;
  });
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const TrainConfig tc = train_config(a);
  const SplitParts parts = load_parts(a.data);
  const ModelConfig cfg = model_config(a.model, parts.train.channels);
  out << to_string(cfg.recurrence) << " model, " << parameter_count(cfg) << " parameters, "
      << cfg.keypoint_count() << " keypoints\n";
  const FitResult result = train_model(cfg, parts, tc, out);
  save_checkpoint(result.best, a.ckpt);
  if (!a.history.empty()) write_text(a.history, history_csv(result.history));
  out << "best epoch " << result.best_epoch << ", checkpoint " << a.ckpt.string() << "\n";
  return kExitOk;
}

// ---- eval / bench ------------------------------------------------------------

std::string predictions_csv(const std::vector<Tensor>& preds, const Recording& rec,
                            std::size_t seq_len) {
  const auto windows = make_windows(rec, seq_len);
  std::string s = "window,t,pred_vx,pred_vy,true_vx,true_vy\n";
  for (std::size_t w = 0; w < preds.size(); ++w) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      s += std::to_string(w) + "," + std::to_string(t) + "," + fmt(preds[w].at(t, 0)) + "," +
           fmt(preds[w].at(t, 1)) + "," + fmt(windows[w].y.at(t, 0)) + "," +
           fmt(windows[w].y.at(t, 1)) + "\n";
    }
  }
  return s;
}

struct EvalArgs {
  fs::path ckpt;
  fs::path data;
  fs::path predictions;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Model model = load_checkpoint(a.ckpt);
  const Recording rec = load_recording(a.data);
  std::vector<Tensor> preds;
  const BenchReport report = run_bench(model, rec, &preds);
  if (!a.predictions.empty()) {
    write_text(a.predictions, predictions_csv(preds, rec, model.config.seq_len));
  }
  out << "r2 " << fmt(report.r2) << "\n";
  return kExitOk;
}

struct BenchArgs {
  fs::path ckpt;
  fs::path data;
  fs::path report;
  fs::path csv;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const Model model = load_checkpoint(a.ckpt);
  const Recording rec = load_recording(a.data);
  const BenchReport report = run_bench(model, rec);
  const std::string json = report_to_json(report);
  if (!a.report.empty()) write_text(a.report, json);
  if (!a.csv.empty()) write_text(a.csv, report_csv_header() + "\n" + report_csv_row(report) + "\n");
  out << json;
  return kExitOk;
}

// ---- stream ------------------------------------------------------------------

struct StreamArgs {
  fs::path ckpt;
  fs::path data;
  fs::path out;
  std::size_t bins = 0;  // 0: whole recording
};

int cmd_stream(const StreamArgs& a, std::ostream& out) {
  const Model model = load_checkpoint(a.ckpt);
  const Recording rec = load_recording(a.data);
  if (rec.channels != model.config.input_channels) {
    throw DimensionError("recording has " + std::to_string(rec.channels) +
                         " channels, model expects " +
                         std::to_string(model.config.input_channels));
  }
  const std::size_t n = a.bins == 0 ? rec.steps() : std::min(a.bins, rec.steps());
  StreamState state = stream_init(model);
  std::vector<double> bin(rec.channels);
  std::string csv = "t,vx,vy,true_vx,true_vy\n";
  std::size_t emitted = 0, segments = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < rec.channels; ++c) bin[c] = rec.spikes[t * rec.channels + c];
    const auto seg = stream_push(model, state, bin);
    if (!seg) continue;
    ++segments;
    for (std::size_t r = 0; r < seg->dim(0); ++r, ++emitted) {
      const std::size_t at = emitted;  // emitted values cover bins 0, 1, 2, ... in order
      csv += std::to_string(at) + "," + fmt(seg->at(r, 0)) + "," + fmt(seg->at(r, 1)) + "," +
             fmt(at < rec.steps() ? rec.velocities[2 * at] : 0.0) + "," +
             fmt(at < rec.steps() ? rec.velocities[2 * at + 1] : 0.0) + "\n";
    }
  }
  if (!a.out.empty()) write_text(a.out, csv);
  const StreamTiming timing = stream_latency(model, rec.bin_us);
  const ReceptiveField rf = receptive_field(model.config);
  const StreamBoundary boundary = stream_boundary(model.config);
  out << "receptive_field " << rf.size << " bins, stride " << rf.stride << " bins\n"
      << "latency_ms " << fmt_short(timing.latency_ms) << "\n"
      << "rate_hz " << fmt_short(timing.rate_hz) << "\n"
      << "window_tail_rows " << model.config.seq_len - boundary.interior_rows
      << " (batch right-padding region a stream cannot reproduce)\n"
      << "pushed " << n << " bins, emitted " << segments << " segments, " << emitted
      << " values\n";
  return kExitOk;
}

// ---- sweep -------------------------------------------------------------------

struct SweepArgs {
  TrainArgs train;
  std::vector<std::size_t> keypoints;
  std::vector<std::string> sizes;
  std::vector<std::size_t> interp;
  fs::path out;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const int modes = !a.keypoints.empty() + !a.sizes.empty() + !a.interp.empty();
  if (modes != 1) throw UsageError("sweep needs exactly one of --keypoints, --sizes, --interp");

  std::string csv;
  if (!a.interp.empty()) {
    const Recording rec = load_recording(a.train.data);
    const Tensor v = rec.velocity_tensor();
    const std::size_t max_stride = *std::max_element(a.interp.begin(), a.interp.end());
    if (max_stride == 0) throw UsageError("--interp strides must be positive");
    // trim to a common multiple of every stride
    std::size_t lcm = 1;
    for (std::size_t s : a.interp) {
      if (s == 0) throw UsageError("--interp strides must be positive");
      lcm = std::lcm(lcm, s);
    }
    const std::size_t steps = v.dim(0) / lcm * lcm;
    if (steps < 2 * max_stride) throw ConfigError("recording too short for the requested strides");
    Tensor trimmed({steps, 2});
    std::copy(v.values().begin(), v.values().begin() + static_cast<std::ptrdiff_t>(steps * 2),
              trimmed.values().begin());
    csv = "stride,r2\n";
    for (std::size_t s : a.interp) {
      const double r2 = interp_oracle_r2(trimmed, s);
      csv += std::to_string(s) + "," + fmt(r2) + "\n";
      out << "stride " << s << " r2 " << fmt_short(r2) << "\n";
    }
  } else {
    const TrainConfig tc = train_config(a.train);
    const SplitParts parts = load_parts(a.train.data);
    if (!a.keypoints.empty()) {
      csv = "keypoints,interpolation_steps,dense,macs,acs,r2\n";
      for (std::size_t k : a.keypoints) {
        ModelArgs m = a.train.model;
        m.keypoints = k;
        const ModelConfig cfg = model_config(m, parts.train.channels);
        out << "keypoints " << k << "\n";
        const FitResult fr = train_model(cfg, parts, tc, out);
        const BenchReport r = run_bench(fr.best, parts.test);
        csv += std::to_string(k) + "," + std::to_string(cfg.keypoint_stride) + "," +
               fmt(r.dense) + "," + fmt(r.macs) + "," + fmt(r.acs) + "," + fmt(r.r2) + "\n";
      }
    } else {
      csv = "channels,hidden,parameters,footprint_bytes,r2\n";
      for (const std::string& size : a.sizes) {
        ModelArgs m = a.train.model;
        m.size = size;
        const ModelConfig cfg = model_config(m, parts.train.channels);
        out << "size " << size << "\n";
        const FitResult fr = train_model(cfg, parts, tc, out);
        const BenchReport r = run_bench(fr.best, parts.test);
        csv += std::to_string(cfg.conv_blocks.front().out_channels) + "," +
               std::to_string(cfg.hidden_size) + "," + std::to_string(parameter_count(cfg)) +
               "," + std::to_string(r.footprint_bytes) + "," + fmt(r.r2) + "\n";
      }
    }
  }
  if (!a.out.empty()) write_text(a.out, csv);
  out << csv;
  return kExitOk;
}

// ---- plot --------------------------------------------------------------------

struct Series {
  std::string name;
  std::string color;
  std::vector<double> values;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
};

std::string escape_xml(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string render_svg(const std::vector<Panel>& panels) {
  const double width = 900, panel_h = 170, margin = 40;
  const double height = margin + panels.size() * (panel_h + margin);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_short(width) +
                  "\" height=\"" + fmt_short(height) + "\" font-family=\"sans-serif\" " +
                  "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  char buf[64];
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double top = margin + p * (panel_h + margin);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n = 0;
    for (const auto& ser : panel.series) {
      n = std::max(n, ser.values.size());
      for (double v : ser.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    s += "<text x=\"" + fmt_short(margin) + "\" y=\"" + fmt_short(top - 8) + "\">" +
         escape_xml(panel.title) + "</text>\n";
    s += "<rect x=\"" + fmt_short(margin) + "\" y=\"" + fmt_short(top) + "\" width=\"" +
         fmt_short(width - 2 * margin) + "\" height=\"" + fmt_short(panel_h) +
         "\" fill=\"none\" stroke=\"#999\"/>\n";
    double legend_x = width - margin - 10;
    for (std::size_t k = panel.series.size(); k-- > 0;) {
      const Series& ser = panel.series[k];
      s += "<text x=\"" + fmt_short(legend_x) + "\" y=\"" + fmt_short(top - 8) +
           "\" text-anchor=\"end\" fill=\"" + ser.color + "\">" + escape_xml(ser.name) +
           "</text>\n";
      legend_x -= 12.0 + 7.0 * static_cast<double>(ser.name.size());
    }
    for (const auto& ser : panel.series) {
      s += "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" + ser.color + "\" points=\"";
      for (std::size_t i = 0; i < ser.values.size(); ++i) {
        const double x = margin + (width - 2 * margin) * (n > 1 ? double(i) / double(n - 1) : 0.0);
        const double y = top + panel_h * (1.0 - (ser.values[i] - lo) / (hi - lo));
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
        s += buf;
      }
      s += "\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

struct PredictionRow {
  std::size_t window = 0, t = 0;
  double pred[2] = {0, 0}, truth[2] = {0, 0};
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& field, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError(ParseError::Kind::bad_csv,
                     "line " + std::to_string(line_no) + ": '" + field + "' is not a number");
  }
}

std::map<std::size_t, std::vector<PredictionRow>> load_predictions(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "window,t,pred_vx,pred_vy,true_vx,true_vy") {
    throw ParseError(ParseError::Kind::bad_csv, path.string() + ": unexpected prediction header");
  }
  std::map<std::size_t, std::vector<PredictionRow>> windows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 6) {
      throw ParseError(ParseError::Kind::bad_csv,
                       path.string() + " line " + std::to_string(line_no) + ": expected 6 fields");
    }
    PredictionRow row;
    const double w = parse_number(f[0], line_no), t = parse_number(f[1], line_no);
    if (w < 0 || t < 0 || w != std::floor(w) || t != std::floor(t)) {
      throw ParseError(ParseError::Kind::bad_csv,
                       "line " + std::to_string(line_no) + ": window and t must be integers");
    }
    row.window = static_cast<std::size_t>(w);
    row.t = static_cast<std::size_t>(t);
    for (int d = 0; d < 2; ++d) {
      row.pred[d] = parse_number(f[2 + d], line_no);
      row.truth[d] = parse_number(f[4 + d], line_no);
    }
    windows[row.window].push_back(row);
  }
  if (windows.empty()) throw ParseError(ParseError::Kind::bad_csv, path.string() + ": no rows");
  return windows;
}

double window_r2(const std::vector<PredictionRow>& rows) {
  Tensor p({rows.size(), 2}), y({rows.size(), 2});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < 2; ++d) {
      p.at(i, d) = rows[i].pred[d];
      y.at(i, d) = rows[i].truth[d];
    }
  }
  try {
    return r2_score(p, y);
  } catch (const EvalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct PlotArgs {
  fs::path predictions;
  fs::path interp;
  std::vector<std::size_t> strides{4, 8, 16};
  std::size_t start = 0;
  std::size_t length = 256;
  fs::path out;
};

int plot_predictions(const PlotArgs& a, std::ostream& out) {
  const auto windows = load_predictions(a.predictions);
  std::vector<std::pair<double, std::size_t>> scored;
  for (const auto& [w, rows] : windows) {
    const double r2 = window_r2(rows);
    if (!std::isnan(r2)) scored.emplace_back(r2, w);
  }
  if (scored.empty()) {
    throw EvalError("no window has a non-constant target; nothing to rank");
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  const std::pair<const char*, std::size_t> picks[] = {
      {"high", 0}, {"median", scored.size() / 2}, {"low", scored.size() - 1}};

  std::string csv = "sample,window,t,pred_vx,pred_vy,true_vx,true_vy\n";
  std::vector<Panel> panels;
  for (const auto& [label, rank] : picks) {
    const auto [r2, w] = scored[rank];
    const auto& rows = windows.at(w);
    Panel px{std::string(label) + " R2 " + fmt_short(r2) + " (window " + std::to_string(w) +
                 "): vx",
             {{"target", "#222222", {}}, {"prediction", "#d62728", {}}}};
    Panel py{std::string(label) + ": vy", {{"target", "#222222", {}}, {"prediction", "#1f77b4", {}}}};
    for (const auto& row : rows) {
      csv += std::string(label) + "," + std::to_string(w) + "," + std::to_string(row.t) + "," +
             fmt(row.pred[0]) + "," + fmt(row.pred[1]) + "," + fmt(row.truth[0]) + "," +
             fmt(row.truth[1]) + "\n";
      px.series[0].values.push_back(row.truth[0]);
      px.series[1].values.push_back(row.pred[0]);
      py.series[0].values.push_back(row.truth[1]);
      py.series[1].values.push_back(row.pred[1]);
    }
    panels.push_back(std::move(px));
    panels.push_back(std::move(py));
    out << label << " window " << w << " r2 " << fmt_short(r2) << "\n";
  }
  const fs::path csv_path = fs::path(a.out.string() + ".csv");
  const fs::path svg_path = fs::path(a.out.string() + ".svg");
  write_text(csv_path, csv);
  write_text(svg_path, render_svg(panels));
  out << "wrote " << csv_path.string() << " and " << svg_path.string() << "\n";
  return kExitOk;
}

int plot_interpolation(const PlotArgs& a, std::ostream& out) {
  const Recording rec = load_recording(a.interp);
  if (a.strides.empty()) throw UsageError("--strides needs at least one value");
  std::size_t lcm = 1;
  for (std::size_t s : a.strides) {
    if (s == 0) throw UsageError("--strides must be positive");
    lcm = std::lcm(lcm, s);
  }
  const std::size_t len = a.length / lcm * lcm;
  if (len < 2 * lcm || a.start + len > rec.steps()) {
    throw ConfigError("segment [" + std::to_string(a.start) + ", " +
                      std::to_string(a.start + len) + ") does not fit the recording of " +
                      std::to_string(rec.steps()) + " bins or is shorter than two strides");
  }
  Tensor v({len, 2});
  for (std::size_t t = 0; t < len; ++t) {
    v.at(t, 0) = rec.velocities[2 * (a.start + t)];
    v.at(t, 1) = rec.velocities[2 * (a.start + t) + 1];
  }
  std::vector<Tensor> recon;
  for (std::size_t s : a.strides) recon.push_back(interp_reconstruct(v, s));

  std::string csv = "t,vx,vy";
  for (std::size_t s : a.strides) {
    csv += ",vx_s" + std::to_string(s) + ",vy_s" + std::to_string(s);
  }
  csv += "\n";
  for (std::size_t t = 0; t < len; ++t) {
    csv += std::to_string(a.start + t) + "," + fmt(v.at(t, 0)) + "," + fmt(v.at(t, 1));
    for (const Tensor& r : recon) csv += "," + fmt(r.at(t, 0)) + "," + fmt(r.at(t, 1));
    csv += "\n";
  }
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"};
  std::vector<Panel> panels(2);
  for (std::size_t d = 0; d < 2; ++d) {
    panels[d].title = d == 0 ? "vx" : "vy";
    Series orig{"original", "#222222", {}};
    for (std::size_t t = 0; t < len; ++t) orig.values.push_back(v.at(t, d));
    panels[d].series.push_back(std::move(orig));
    for (std::size_t k = 0; k < recon.size(); ++k) {
      Series s{std::to_string(a.strides[k]) + "-step", colors[k % 5], {}};
      for (std::size_t t = 0; t < len; ++t) s.values.push_back(recon[k].at(t, d));
      panels[d].series.push_back(std::move(s));
    }
  }
  const fs::path csv_path = fs::path(a.out.string() + "_interp.csv");
  const fs::path svg_path = fs::path(a.out.string() + "_interp.svg");
  write_text(csv_path, csv);
  write_text(svg_path, render_svg(panels));
  out << "wrote " << csv_path.string() << " and " << svg_path.string() << "\n";
  return kExitOk;
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.predictions.empty() && a.interp.empty()) {
    throw UsageError("plot needs --predictions and/or --interp");
  }
  if (!a.predictions.empty()) plot_predictions(a, out);
  if (!a.interp.empty()) plot_interpolation(a, out);
  return kExitOk;
}

void add_model_flags(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--track", m.track, "Preset geometry: track1 or track2")
      ->check(CLI::IsMember({"track1", "track2", "t1", "t2"}))
      ->capture_default_str();
  cmd->add_option("--recurrence", m.recurrence, "Recurrent unit: gru, lif or sgru")
      ->check(CLI::IsMember({"gru", "lif", "sgru"}))
      ->capture_default_str();
  cmd->add_option("--seed", m.seed, "Seed for initialisation and batch order")
      ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainArgs& t) {
  cmd->add_option("--data", t.data, "Recording file or directory with train/val/test.ndr")
      ->required();
  cmd->add_option("--lr", t.lr, "Adam learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--epochs", t.epochs, "Maximum number of epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--batch", t.batch, "Windows per optimisation step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--patience", t.patience, "Epochs without validation gain before stopping")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_model_flags(cmd, t.model);
}

int dispatch(CLI::App& app, std::ostream& out, const SynthArgs& synth, const TrainArgs& train,
             const EvalArgs& eval, const BenchArgs& bench, const StreamArgs& stream,
             const SweepArgs& sweep, const PlotArgs& plot) {
  if (app.got_subcommand("synth")) return cmd_synth(synth, out);
  if (app.got_subcommand("train")) return cmd_train(train, out);
  if (app.got_subcommand("eval")) return cmd_eval(eval, out);
  if (app.got_subcommand("bench")) return cmd_bench(bench, out);
  if (app.got_subcommand("stream")) return cmd_stream(stream, out);
  if (app.got_subcommand("sweep")) return cmd_sweep(sweep, out);
  if (app.got_subcommand("plot")) return cmd_plot(plot, out);
  throw UsageError("no subcommand given");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spike-count velocity decoder: training, evaluation, benchmarking and streaming",
               "spikedec"};
  app.require_subcommand(1);
  app.footer(
      "Environment: SPIKEDEC_THREADS caps the number of worker threads.\n"
      "Exit codes: 0 success, 1 usage error, 2 data or model error.");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic reaching recording");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--channels", synth.channels, "Number of recorded channels")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 16))
      ->capture_default_str();
  c_synth->add_option("--seconds", synth.seconds, "Recording length in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  c_synth->add_option("--base-hz", synth.params.base_hz, "Resting firing rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_synth->add_option("--mod-hz", synth.params.mod_hz_per_unit,
                      "Rate gain per unit of velocity along the preferred direction")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_synth->add_flag("--csv", synth.csv, "Also write recording.csv");
  c_synth->footer(std::string(
                      "Writes recording.ndr and its contiguous 50/25/25 split train.ndr,\n"
                      "val.ndr, test.ndr (each a multiple of 1024 bins).\n") +
                  kRecordingFormats);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a decoder and write its checkpoint");
  add_train_flags(c_train, train);
  c_train->add_option("--keypoints", train.model.keypoints,
                      "Keypoint-sweep geometry (1025, 513, 257 or 129) instead of a preset");
  c_train->add_option("--size", train.model.size,
                      "Track-2 geometry with conv width C and hidden size H, as CxH");
  c_train->add_option("--ckpt", train.ckpt, "Checkpoint prefix to write")->required();
  c_train->add_option("--history", train.history, "Per-epoch CSV: epoch,train_loss,val_r2");
  c_train->footer(std::string(kRecordingFormats) + kCheckpointFormat);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Report R2 of a checkpoint on a recording");
  c_eval->add_option("--ckpt", eval.ckpt, "Checkpoint prefix")->required();
  c_eval->add_option("--data", eval.data, "Recording file")->required();
  c_eval->add_option("--predictions", eval.predictions, "Write per-bin predictions CSV");
  c_eval->footer(std::string(kRecordingFormats) + kCheckpointFormat + kPredictionFormat);

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Measure footprint, sparsity, operations and R2");
  c_bench->add_option("--ckpt", bench.ckpt, "Checkpoint prefix")->required();
  c_bench->add_option("--data", bench.data, "Test recording file")->required();
  c_bench->add_option("--report", bench.report, "Write the JSON report here");
  c_bench->add_option("--csv", bench.csv, "Write the report as one CSV row");
  c_bench->footer(std::string(kReportFormat) + kRecordingFormats + kCheckpointFormat);

  StreamArgs stream;
  auto* c_stream = app.add_subcommand("stream", "Decode a recording bin by bin");
  c_stream->add_option("--ckpt", stream.ckpt, "Checkpoint prefix")->required();
  c_stream->add_option("--data", stream.data, "Recording file")->required();
  c_stream->add_option("--bins", stream.bins, "Stop after this many bins (0: all)")
      ->capture_default_str();
  c_stream->add_option("--out", stream.out, "Emitted values CSV: t,vx,vy,true_vx,true_vy");
  c_stream->footer(std::string(
                       "Recurrent state carries across the whole stream. Values are emitted\n"
                       "one interpolation segment at a time once a keypoint's receptive field\n"
                       "is complete; t is the bin each value belongs to. Against a batch\n"
                       "window the last window_tail_rows values differ, because batch\n"
                       "forward zero-pads every layer at the window's right edge.\n") +
                   kRecordingFormats + kCheckpointFormat);

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Train and benchmark a family of configurations");
  add_train_flags(c_sweep, sweep.train);
  c_sweep->add_option("--keypoints", sweep.keypoints, "Keypoint counts, e.g. 1025,513,257,129")
      ->delimiter(',');
  c_sweep->add_option("--sizes", sweep.sizes, "Conv width x hidden size, e.g. 10x20,32x64")
      ->delimiter(',');
  c_sweep->add_option("--interp", sweep.interp,
                      "Interpolation strides for the keypoint-only oracle, e.g. 1,4,8,16")
      ->delimiter(',');
  c_sweep->add_option("--out", sweep.out, "CSV output");
  c_sweep->footer(std::string(
                      "Output CSV columns:\n"
                      "  --keypoints  keypoints,interpolation_steps,dense,macs,acs,r2\n"
                      "  --sizes      channels,hidden,parameters,footprint_bytes,r2\n"
                      "  --interp     stride,r2 (no training; --data is one recording)\n") +
                  kRecordingFormats);

  PlotArgs plot;
  auto* c_plot = app.add_subcommand("plot", "Write velocity traces as CSV and SVG");
  c_plot->add_option("--predictions", plot.predictions,
                     "Prediction CSV from `eval`; plots the high, median and low R2 windows");
  c_plot->add_option("--interp", plot.interp, "Recording whose velocity gets interpolation overlays");
  c_plot->add_option("--strides", plot.strides, "Overlay strides")
      ->delimiter(',')
      ->capture_default_str();
  c_plot->add_option("--start", plot.start, "First bin of the overlay segment")
      ->capture_default_str();
  c_plot->add_option("--length", plot.length, "Overlay segment length in bins")
      ->capture_default_str();
  c_plot->add_option("--out", plot.out, "Output prefix: PREFIX.csv/.svg, PREFIX_interp.csv/.svg")
      ->required();
  c_plot->footer(std::string(kPredictionFormat) +
                 "Sample CSV: sample,window,t,pred_vx,pred_vy,true_vx,true_vy with\n"
                 "sample in {high, median, low}.\n" + kRecordingFormats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return dispatch(app, out, synth, train, eval, bench, stream, sweep, plot);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace spikedec
