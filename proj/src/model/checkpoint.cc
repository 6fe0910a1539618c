#include "model/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

  namespace {
    constexpr char kMagic[8] = {'R', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};
    constexpr std::uint32_t kVersion = 1;

    struct Section {
      const char* tag;
      const std::map<std::string, Tensor>* tensors;
    };

    struct Header {
      json header;
      std::uint64_t payload_offset = 0;
    };

    Header read_header(std::ifstream& is, const fs::path& path) {
      char magic[8];
      std::uint32_t version = 0;
      std::uint64_t len = 0;
      is.read(magic, 8);
      is.read(reinterpret_cast<char*>(&version), sizeof(version));
      is.read(reinterpret_cast<char*>(&len), sizeof(len));
      if (!is || std::memcmp(magic, kMagic, 8) != 0)
        fail(ErrorKind::Data, "BadCheckpoint", path.string() + " is not a checkpoint");
      if (version != kVersion)
        fail(ErrorKind::Data, "BadCheckpoint", "unsupported checkpoint version " + std::to_string(version));
      std::string text(len, '\0');
      is.read(text.data(), static_cast<std::streamsize>(len));
      if (!is)
        fail(ErrorKind::Data, "BadCheckpoint", path.string() + ": truncated header");
      Header h;
      try {
        h.header = json::parse(text);
      } catch (const json::exception& e) {
        fail(ErrorKind::Data, "BadCheckpoint", path.string() + ": " + e.what());
      }
      h.payload_offset = 8 + sizeof(version) + sizeof(len) + len;
      return h;
    }
  }

  void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const Section sections[] = {{"param", &ckpt.params}, {"adam_m", &ckpt.adam_m}, {"adam_v", &ckpt.adam_v}};
    json table = json::array();
    for (const auto& s : sections)
      for (const auto& [name, t] : *s.tensors)
        table.push_back({{"section", s.tag}, {"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    json header = {
      {"config", to_json(ckpt.config)},
      {"step", ckpt.step},
      {"adam_steps", ckpt.adam_steps},
      {"meta", ckpt.meta},
      {"tensors", table},
    };
    const std::string text = header.dump();

    if (path.has_parent_path())
      fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os)
        fail(ErrorKind::Io, "IoError", "cannot write " + tmp.string());
      const std::uint64_t len = text.size();
      os.write(kMagic, 8);
      os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
      os.write(reinterpret_cast<const char*>(&len), sizeof(len));
      os.write(text.data(), static_cast<std::streamsize>(len));
      for (const auto& s : sections)
        for (const auto& [_, t] : *s.tensors)
          os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!os)
        fail(ErrorKind::Io, "IoError", "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
  }

  Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
      fail(ErrorKind::Io, "MissingCheckpoint", "cannot open checkpoint " + path.string());
    Header h = read_header(is, path);
    Checkpoint ckpt;
    try {
      ckpt.config = model_config_from_json(h.header.at("config"));
      ckpt.step = h.header.at("step").get<std::int64_t>();
      ckpt.adam_steps = h.header.value("adam_steps", std::int64_t{0});
      ckpt.meta = h.header.value("meta", json::object());
      for (const auto& entry : h.header.at("tensors")) {
        const auto rows = entry.at("rows").get<Index>();
        const auto cols = entry.at("cols").get<Index>();
        Tensor t(rows, cols);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is)
          fail(ErrorKind::Data, "BadCheckpoint", path.string() + ": truncated payload");
        const std::string section = entry.at("section").get<std::string>();
        const std::string name = entry.at("name").get<std::string>();
        if (section == "param")
          ckpt.params[name] = std::move(t);
        else if (section == "adam_m")
          ckpt.adam_m[name] = std::move(t);
        else if (section == "adam_v")
          ckpt.adam_v[name] = std::move(t);
        else
          fail(ErrorKind::Data, "BadCheckpoint", "unknown tensor section '" + section + "'");
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::Data, "BadCheckpoint", path.string() + ": " + e.what());
    }
    return ckpt;
  }

  std::string checkpoint_payload(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
      fail(ErrorKind::Io, "MissingCheckpoint", "cannot open checkpoint " + path.string());
    Header h = read_header(is, path);
    is.seekg(static_cast<std::streamoff>(h.payload_offset));
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }

  Checkpoint checkpoint_from_model(const Model& model) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    for (const auto& [name, v] : model.params().items())
      ckpt.params[name] = v.value();
    return ckpt;
  }

  Model model_from_checkpoint(const Checkpoint& ckpt) {
    auto has_prefix = [&](const std::string& prefix) {
      auto it = ckpt.params.lower_bound(prefix);
      return it != ckpt.params.end() && it->first.starts_with(prefix);
    };
    Model model(ckpt.config, 0, ModelParts{has_prefix("recon."), has_prefix("ctc.")});
    ParameterStore& store = model.params();
    for (const auto& name : store.names())
      if (!ckpt.params.count(name))
        fail(ErrorKind::Data, "ConfigMismatch", "checkpoint lacks parameter '" + name + "'");
    for (const auto& [name, t] : ckpt.params) {
      if (!store.contains(name))
        fail(ErrorKind::Data, "ConfigMismatch", "checkpoint parameter '" + name + "' does not fit the configuration");
      if (!store.get(name).value().same_shape(t))
        fail(ErrorKind::Data, "ConfigMismatch", "parameter '" + name + "' has shape " + t.shape_string()
             + " but the configuration implies " + store.get(name).value().shape_string());
      store.add(name, t);
    }
    return model;
  }

}
