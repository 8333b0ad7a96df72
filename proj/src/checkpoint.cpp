#include "spikedec/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace spikedec {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "spikedec-checkpoint";

json config_json(const ModelConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.conv_blocks) {
    blocks.push_back({{"out_channels", b.out_channels},
                      {"kernel", b.kernel},
                      {"padding", b.padding},
                      {"pool", b.pool}});
  }
  return {{"recurrence", to_string(cfg.recurrence)},
          {"input_channels", cfg.input_channels},
          {"seq_len", cfg.seq_len},
          {"conv_blocks", blocks},
          {"hidden_size", cfg.hidden_size},
          {"keypoint_stride", cfg.keypoint_stride},
          {"lif",
           {{"beta", cfg.lif.beta},
            {"theta", cfg.lif.theta},
            {"surrogate_slope", cfg.lif.surrogate_slope}}},
          {"seed", cfg.seed}};
}

ModelConfig config_from(const json& j) {
  ModelConfig cfg;
  cfg.recurrence = parse_recurrence(j.at("recurrence").get<std::string>());
  cfg.input_channels = j.at("input_channels").get<std::size_t>();
  cfg.seq_len = j.at("seq_len").get<std::size_t>();
  cfg.hidden_size = j.at("hidden_size").get<std::size_t>();
  cfg.keypoint_stride = j.at("keypoint_stride").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& b : j.at("conv_blocks")) {
    cfg.conv_blocks.push_back({b.at("out_channels").get<std::size_t>(),
                               b.at("kernel").get<std::size_t>(),
                               b.at("padding").get<std::size_t>(), b.at("pool").get<bool>()});
  }
  const auto& lif = j.at("lif");
  cfg.lif.beta = lif.at("beta").get<double>();
  cfg.lif.theta = lif.at("theta").get<double>();
  cfg.lif.surrogate_slope = lif.at("surrogate_slope").get<double>();
  return cfg;
}

void write_f32_le(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  os.write(bytes, 4);
}

double read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Kind::missing_file, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

CheckpointPaths checkpoint_paths(const std::filesystem::path& prefix) {
  std::string base = prefix.string();
  const std::string suffix = ".manifest.json";
  if (base.size() > suffix.size() &&
      base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    base.resize(base.size() - suffix.size());
  }
  return {base + ".manifest.json", base + ".weights.bin"};
}

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model configuration: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& prefix) {
  const auto paths = checkpoint_paths(prefix);
  if (paths.manifest.has_parent_path()) {
    std::filesystem::create_directories(paths.manifest.parent_path());
  }
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : model.params.tensors()) {
    table.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset},
                     {"count", t->size()}});
    offset += t->size();
  }
  const json manifest = {{"format", kFormat},
                         {"version", kCheckpointVersion},
                         {"config", config_json(model.config)},
                         {"tensors", table},
                         {"blob_elements", offset}};

  std::ofstream weights(paths.weights, std::ios::binary | std::ios::trunc);
  if (!weights) throw Error("cannot write " + paths.weights.string());
  for (const auto& [name, t] : model.params.tensors()) {
    for (double v : t->values()) write_f32_le(weights, v);
  }
  std::ofstream mf(paths.manifest, std::ios::binary | std::ios::trunc);
  if (!mf) throw Error("cannot write " + paths.manifest.string());
  mf << manifest.dump(2) << '\n';
}

Model load_checkpoint(const std::filesystem::path& prefix) {
  const auto paths = checkpoint_paths(prefix);
  json manifest;
  try {
    manifest = json::parse(read_file(paths.manifest));
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::corrupt_manifest,
                    paths.manifest.string() + ": " + e.what());
  }

  Model model;
  std::vector<json> table;
  std::size_t blob_elements = 0;
  try {
    if (manifest.at("format").get<std::string>() != kFormat) {
      throw LoadError(LoadError::Kind::corrupt_manifest, "not a spikedec checkpoint");
    }
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError(LoadError::Kind::version_mismatch,
                      "checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    }
    model.config = config_from(manifest.at("config"));
    table = manifest.at("tensors").get<std::vector<json>>();
    blob_elements = manifest.at("blob_elements").get<std::size_t>();
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::corrupt_manifest, e.what());
  } catch (const ConfigError& e) {
    throw LoadError(LoadError::Kind::corrupt_manifest, e.what());
  }

  try {
    model = Model::zeros(model.config);
  } catch (const ConfigError& e) {
    throw LoadError(LoadError::Kind::corrupt_manifest, e.what());
  }

  const std::string blob = read_file(paths.weights);
  if (blob.size() != blob_elements * 4) {
    throw LoadError(LoadError::Kind::blob_size,
                    "weights file holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                        std::to_string(blob_elements * 4));
  }

  auto tensors = model.params.tensors();
  if (table.size() != tensors.size()) {
    throw LoadError(LoadError::Kind::layout, "tensor table lists " + std::to_string(table.size()) +
                                                 " tensors, configuration needs " +
                                                 std::to_string(tensors.size()));
  }

  struct Span {
    std::size_t offset, count;
  };
  std::vector<Span> spans;
  try {
    for (std::size_t i = 0; i < table.size(); ++i) {
      const json& e = table[i];
      auto& [name, t] = tensors[i];
      const auto shape = e.at("shape").get<Tensor::Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (e.at("name").get<std::string>() != name || shape != t->shape() || count != t->size()) {
        throw LoadError(LoadError::Kind::layout, "tensor entry " + std::to_string(i) + " ('" +
                                                     e.at("name").get<std::string>() +
                                                     "') does not match configuration");
      }
      spans.push_back({offset, count});
    }
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::corrupt_manifest, e.what());
  }

  // Offsets must tile [0, blob_elements) exactly.
  std::vector<Span> sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& a, const Span& b) { return a.offset < b.offset; });
  std::size_t expected = 0;
  for (const Span& s : sorted) {
    if (s.offset != expected) {
      throw LoadError(LoadError::Kind::layout,
                      s.offset < expected ? "tensor offsets overlap at element " +
                                                std::to_string(s.offset)
                                          : "gap in tensor offsets at element " +
                                                std::to_string(expected));
    }
    expected += s.count;
  }
  if (expected != blob_elements) {
    throw LoadError(LoadError::Kind::layout, "tensor table covers " + std::to_string(expected) +
                                                 " of " + std::to_string(blob_elements) +
                                                 " elements");
  }

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& t = *tensors[i].second;
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = read_f32_le(bytes + 4 * (spans[i].offset + k));
  }
  return model;
}

}  // namespace spikedec
