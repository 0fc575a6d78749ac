#include "tinytrack/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tinytrack {

namespace {

constexpr char kMagic[4] = {'T', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

nlohmann::json config_to_json(const track::TrackerNetConfig& cfg) {
  return {
      {"net_input", cfg.net_input},
      {"base_channels", cfg.backbone.base_channels},
      {"out_channels", cfg.backbone.out_channels},
      {"leaky_slope", cfg.backbone.leaky_slope},
      {"roi_bins", cfg.iou.roi_bins},
      {"iou_hidden", cfg.iou.hidden},
      {"filter_size", cfg.filter_size},
      {"filter_lambda", cfg.filter_lambda},
      {"label_sigma", cfg.label_sigma},
      {"seed", cfg.seed},
  };
}

track::TrackerNetConfig config_from_json(const nlohmann::json& j) {
  track::TrackerNetConfig cfg;
  cfg.net_input = j.at("net_input").get<int>();
  cfg.backbone.base_channels = j.at("base_channels").get<int>();
  cfg.backbone.out_channels = j.at("out_channels").get<int>();
  cfg.backbone.leaky_slope = j.at("leaky_slope").get<double>();
  cfg.iou.roi_bins = j.at("roi_bins").get<int>();
  cfg.iou.hidden = j.at("iou_hidden").get<int>();
  cfg.filter_size = j.at("filter_size").get<int>();
  cfg.filter_lambda = j.at("filter_lambda").get<double>();
  cfg.label_sigma = j.at("label_sigma").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& base, const track::TrackerNet& net,
                     const std::map<std::string, std::string>& metadata) {
  // The const_cast is contained: parameter access only reads values here.
  auto& mutable_net = const_cast<track::TrackerNet&>(net);
  const auto params = mutable_net.all_params();

  std::filesystem::path bin = base;
  bin += ".ckpt";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + bin.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& t = p.var->value;
    write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }

  nlohmann::json meta;
  meta["format_version"] = kVersion;
  meta["config"] = config_to_json(net.config());
  meta["metadata"] = metadata;
  std::filesystem::path js = base;
  js += ".json";
  std::ofstream jout(js);
  if (!jout) throw std::runtime_error("checkpoint: cannot write " + js.string());
  jout << meta.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& base) {
  std::filesystem::path js = base;
  js += ".json";
  std::ifstream jin(js);
  if (!jin) throw std::runtime_error("checkpoint: cannot open " + js.string());
  nlohmann::json meta;
  jin >> meta;
  if (meta.at("format_version").get<std::uint32_t>() != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }

  LoadedCheckpoint loaded{track::TrackerNet(config_from_json(meta.at("config"))), {}};
  if (meta.contains("metadata")) {
    for (auto it = meta["metadata"].begin(); it != meta["metadata"].end(); ++it) {
      loaded.metadata[it.key()] = it.value().get<std::string>();
    }
  }

  std::filesystem::path bin = base;
  bin += ".ckpt";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + bin.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + bin.string());
  }
  if (read_u32(in) != kVersion) {
    throw std::runtime_error("checkpoint: unsupported binary version");
  }
  const std::uint32_t count = read_u32(in);

  auto params = loaded.net.all_params();
  if (params.size() != count) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    if (params[i].name != name || params[i].var->value.shape != shape) {
      throw std::runtime_error("checkpoint: tensor layout mismatch at '" + name + "'");
    }
    in.read(reinterpret_cast<char*>(params[i].var->value.v.data()),
            static_cast<std::streamsize>(params[i].var->value.v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
  }
  return loaded;
}

}  // namespace tinytrack
