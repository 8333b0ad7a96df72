#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "spikedec/bench.hpp"
#include "spikedec/checkpoint.hpp"
#include "spikedec/data.hpp"
#include "spikedec/error.hpp"
#include "spikedec/model.hpp"
#include "spikedec/rng.hpp"
#include "spikedec/stream.hpp"
#include "spikedec/train.hpp"

namespace py = pybind11;
using namespace spikedec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), t.values().data(), t.size() * sizeof(double));
  return a;
}

Tensor from_numpy(const Array& a) {
  Tensor::Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::memcpy(t.values().data(), a.data(), t.size() * sizeof(double));
  return t;
}

py::dict report_dict(const BenchReport& r) {
  py::dict d;
  d["footprint_bytes"] = r.footprint_bytes;
  d["connection_sparsity"] = r.connection_sparsity;
  d["activation_sparsity"] = r.activation_sparsity;
  d["dense"] = r.dense;
  d["macs"] = r.macs;
  d["acs"] = r.acs;
  d["r2"] = r.r2;
  return d;
}

Recording make_recording(
    py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> spikes,
    py::array_t<float, py::array::c_style | py::array::forcecast> velocities,
    std::uint32_t bin_us) {
  if (spikes.ndim() != 2 || velocities.ndim() != 2 || velocities.shape(1) != 2 ||
      spikes.shape(0) != velocities.shape(0)) {
    throw DimensionError("expected spikes [T x C] and velocities [T x 2]");
  }
  Recording r;
  r.bin_us = bin_us;
  r.channels = static_cast<std::size_t>(spikes.shape(1));
  r.spikes.assign(spikes.data(), spikes.data() + spikes.size());
  r.velocities.assign(velocities.data(), velocities.data() + velocities.size());
  r.validate();
  return r;
}

}  // namespace

PYBIND11_MODULE(_spikedec, m) {
  m.doc() = "Convolutional-recurrent velocity decoder for binned spike counts";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EvalError>(m, "EvalError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<LoadError>(m, "LoadError", base.ptr());

  py::enum_<Recurrence>(m, "Recurrence")
      .value("gru", Recurrence::gru)
      .value("lif", Recurrence::lif)
      .value("sgru", Recurrence::sgru);
  py::enum_<Track>(m, "Track").value("track1", Track::track1).value("track2", Track::track2);

  py::class_<ConvBlockSpec>(m, "ConvBlockSpec")
      .def(py::init<std::size_t, std::size_t, std::size_t, bool>(), py::arg("out_channels"),
           py::arg("kernel"), py::arg("padding"), py::arg("pool") = true)
      .def_readwrite("out_channels", &ConvBlockSpec::out_channels)
      .def_readwrite("kernel", &ConvBlockSpec::kernel)
      .def_readwrite("padding", &ConvBlockSpec::padding)
      .def_readwrite("pool", &ConvBlockSpec::pool);

  py::class_<LifSettings>(m, "LifSettings")
      .def(py::init<>())
      .def_readwrite("beta", &LifSettings::beta)
      .def_readwrite("theta", &LifSettings::theta)
      .def_readwrite("surrogate_slope", &LifSettings::surrogate_slope);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("recurrence", &ModelConfig::recurrence)
      .def_readwrite("input_channels", &ModelConfig::input_channels)
      .def_readwrite("seq_len", &ModelConfig::seq_len)
      .def_readwrite("conv_blocks", &ModelConfig::conv_blocks)
      .def_readwrite("hidden_size", &ModelConfig::hidden_size)
      .def_readwrite("keypoint_stride", &ModelConfig::keypoint_stride)
      .def_readwrite("lif", &ModelConfig::lif)
      .def_readwrite("seed", &ModelConfig::seed)
      .def("stage_lengths", &ModelConfig::stage_lengths)
      .def("keypoint_count", &ModelConfig::keypoint_count)
      .def("validate", &ModelConfig::validate)
      .def("to_json", [](const ModelConfig& c) { return config_to_json(c); });

  m.def("preset", &preset, py::arg("track"), py::arg("recurrence"));
  m.def("keypoint_sweep_config", &keypoint_sweep_config, py::arg("keypoints"),
        py::arg("recurrence"), py::arg("channels") = 10, py::arg("hidden") = 20);
  m.def("size_sweep_config", &size_sweep_config, py::arg("channels"), py::arg("hidden"),
        py::arg("recurrence"));
  m.def("parameter_count", py::overload_cast<const ModelConfig&>(&parameter_count));
  m.def(
      "receptive_field",
      [](const ModelConfig& c) {
        const ReceptiveField rf = receptive_field(c);
        return py::make_tuple(rf.size, rf.stride, rf.left_padding);
      },
      "(size, stride, left_padding) in input bins");

  py::class_<Model>(m, "Model")
      .def_static("initialize", &Model::initialize, py::arg("config"))
      .def_static("zeros", &Model::zeros, py::arg("config"))
      .def_readonly("config", &Model::config)
      .def("parameter_count", &Model::parameter_count)
      .def("parameters",
           [](const Model& model) {
             py::dict d;
             for (const auto& [name, t] : model.params.tensors()) d[name.c_str()] = to_numpy(*t);
             return d;
           })
      .def("set_parameter", [](Model& model, const std::string& name, const Array& a) {
        for (auto& [n, t] : model.params.tensors()) {
          if (n != name) continue;
          Tensor v = from_numpy(a);
          require_same_shape(v, *t, "set_parameter");
          *t = std::move(v);
          return;
        }
        throw ConfigError("no parameter named '" + name + "'");
      });

  m.def(
      "forward",
      [](const Model& model, const Array& x, bool relaxed) {
        ForwardResult r =
            forward(model, from_numpy(x), {relaxed ? SpikeMode::relaxed : SpikeMode::hard, false});
        return py::make_tuple(to_numpy(r.velocities), to_numpy(r.keypoints));
      },
      py::arg("model"), py::arg("x"), py::arg("relaxed") = false,
      "x [channels x seq_len] -> (velocities [seq_len x 2], keypoints [K x 2])");

  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("prefix"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("prefix"));

  py::class_<Recording>(m, "Recording")
      .def(py::init(&make_recording), py::arg("spikes"), py::arg("velocities"),
           py::arg("bin_us") = 4000)
      .def_readonly("channels", &Recording::channels)
      .def_readonly("bin_us", &Recording::bin_us)
      .def_property_readonly("steps", &Recording::steps)
      .def_property_readonly("spikes",
                             [](const Recording& r) {
                               py::array_t<std::uint8_t> a(
                                   {static_cast<py::ssize_t>(r.steps()),
                                    static_cast<py::ssize_t>(r.channels)});
                               std::memcpy(a.mutable_data(), r.spikes.data(), r.spikes.size());
                               return a;
                             })
      .def_property_readonly("velocities",
                             [](const Recording& r) {
                               py::array_t<float> a({static_cast<py::ssize_t>(r.steps()),
                                                     py::ssize_t{2}});
                               std::memcpy(a.mutable_data(), r.velocities.data(),
                                           r.velocities.size() * sizeof(float));
                               return a;
                             })
      .def("slice", &Recording::slice)
      .def("__eq__", [](const Recording& a, const Recording& b) { return a == b; });

  m.def(
      "synth_reaching",
      [](std::uint64_t seed, double seconds, std::size_t channels) {
        Rng rng(seed);
        return synth_reaching(rng, seconds, channels);
      },
      py::arg("seed"), py::arg("seconds"), py::arg("channels") = 96);
  m.def(
      "split",
      [](const Recording& r, double train, double val, double test) {
        SplitParts p = split(r, SplitSpec{train, val, test});
        return py::make_tuple(p.train, p.val, p.test);
      },
      py::arg("recording"), py::arg("train") = 0.5, py::arg("val") = 0.25,
      py::arg("test") = 0.25);
  m.def("save_ndr", &save_ndr);
  m.def("load_ndr", &load_ndr);
  m.def("save_csv", &save_csv);
  m.def("load_csv", &load_csv);
  m.def("load_recording", &load_recording);

  m.def(
      "interp_oracle_r2",
      [](const Array& v, std::size_t stride) { return interp_oracle_r2(from_numpy(v), stride); },
      py::arg("velocities"), py::arg("stride"));
  m.def(
      "r2_score",
      [](const Array& pred, const Array& target) {
        return r2_score(from_numpy(pred), from_numpy(target));
      },
      py::arg("pred"), py::arg("target"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience);

  m.def(
      "fit",
      [](const Model& model, const Recording& train, const Recording& val,
         const TrainConfig& cfg) {
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(model, train, val, cfg);
        }
        py::list history;
        for (const auto& e : r.history) history.append(py::make_tuple(e.epoch, e.train_loss, e.val_r2));
        return py::make_tuple(std::move(r.best), history);
      },
      py::arg("model"), py::arg("train"), py::arg("val"), py::arg("config"),
      "Returns (best model, [(epoch, train_loss, val_r2), ...]).");
  m.def("evaluate_r2", &evaluate_r2);

  m.def(
      "run_bench",
      [](const Model& model, const Recording& test) {
        BenchReport r;
        {
          py::gil_scoped_release release;
          r = run_bench(model, test);
        }
        return report_dict(r);
      },
      py::arg("model"), py::arg("test"));

  py::class_<StreamState>(m, "StreamState")
      .def_readonly("bins_seen", &StreamState::bins_seen)
      .def_readonly("next_keypoint", &StreamState::next_keypoint);
  m.def("stream_init", &stream_init, py::arg("model"));
  m.def(
      "stream_push",
      [](const Model& model, StreamState& state, const Array& bin) -> py::object {
        const Tensor b = from_numpy(bin);
        auto seg = stream_push(model, state, b.values());
        if (!seg) return py::none();
        return to_numpy(*seg);
      },
      py::arg("model"), py::arg("state"), py::arg("bin"));
  m.def(
      "stream_latency",
      [](const Model& model) {
        const StreamTiming t = stream_latency(model);
        return py::make_tuple(t.latency_ms, t.rate_hz);
      },
      py::arg("model"), "(latency_ms, rate_hz) at 4 ms bins");
  m.def(
      "stream_boundary",
      [](const ModelConfig& c) {
        const StreamBoundary b = stream_boundary(c);
        return py::make_tuple(b.emitted_rows, b.interior_rows);
      },
      py::arg("config"), "(emitted_rows, interior_rows) for one streamed window of seq_len bins");
}
