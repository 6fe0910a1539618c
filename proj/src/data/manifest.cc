#include "data/manifest.h"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "core/error.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  std::string to_string(Role role) {
    switch (role) {
    case Role::Clean: return "clean";
    case Role::Noisy: return "noisy";
    case Role::Noise: return "noise";
    }
    return "clean";
  }

  Role role_from_string(const std::string& text) {
    if (text == "clean")
      return Role::Clean;
    if (text == "noisy")
      return Role::Noisy;
    if (text == "noise")
      return Role::Noise;
    fail(ErrorKind::Data, "BadManifest", "unknown role '" + text + "'");
  }

  void validate_manifest(const Manifest& manifest, bool check_paths) {
    std::unordered_set<std::string> ids;
    for (const auto& e : manifest.entries) {
      if (e.utterance_id.empty())
        fail(ErrorKind::Data, "BadManifest", "entry with empty utterance_id");
      if (!ids.insert(e.utterance_id).second)
        fail(ErrorKind::Data, "BadManifest", "duplicate utterance_id '" + e.utterance_id + "'");
      if (!(e.duration_seconds > 0.0))
        fail(ErrorKind::Data, "BadManifest", "non-positive duration for '" + e.utterance_id + "'");
      if (check_paths) {
        if (!fs::exists(e.audio_path))
          fail(ErrorKind::Data, "BadManifest", "missing audio " + e.audio_path.string());
        if (e.clean_path && !fs::exists(*e.clean_path))
          fail(ErrorKind::Data, "BadManifest", "missing clean audio " + e.clean_path->string());
      }
    }
  }

  Manifest load_manifest(const fs::path& path, bool check_paths) {
    std::ifstream is(path);
    if (!is)
      fail(ErrorKind::Io, "IoError", "cannot open manifest " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) {
      fs::path candidate(p);
      return candidate.is_absolute() ? candidate : base / candidate;
    };

    Manifest manifest;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        fail(ErrorKind::Data, "BadManifest", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      try {
        ManifestEntry e;
        e.utterance_id = j.at("utterance_id").get<std::string>();
        e.audio_path = resolve(j.at("audio_path").get<std::string>());
        e.duration_seconds = j.at("duration_seconds").get<double>();
        e.role = role_from_string(j.value("role", std::string("clean")));
        if (j.contains("transcript") && !j["transcript"].is_null())
          e.transcript = j["transcript"].get<std::string>();
        if (j.contains("clean_path"))
          e.clean_path = resolve(j["clean_path"].get<std::string>());
        if (j.contains("snr_db"))
          e.snr_db = j["snr_db"].get<double>();
        if (j.contains("noise_id"))
          e.noise_id = j["noise_id"].get<std::string>();
        if (j.contains("seed"))
          e.seed = j["seed"].get<std::uint64_t>();
        manifest.entries.push_back(std::move(e));
      } catch (const json::exception& e) {
        fail(ErrorKind::Data, "BadManifest", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    validate_manifest(manifest, check_paths);
    return manifest;
  }

  void save_manifest(const Manifest& manifest, const fs::path& path) {
    if (path.has_parent_path())
      fs::create_directories(path.parent_path());
    const fs::path base = fs::absolute(path.has_parent_path() ? path.parent_path() : fs::path("."));
    auto relative = [&](const fs::path& p) {
      const fs::path abs = fs::absolute(p).lexically_normal();
      const fs::path rel = abs.lexically_relative(base.lexically_normal());
      return (rel.empty() ? abs : rel).generic_string();
    };

    std::ofstream os(path);
    if (!os)
      fail(ErrorKind::Io, "IoError", "cannot write manifest " + path.string());
    for (const auto& e : manifest.entries) {
      json j;
      j["utterance_id"] = e.utterance_id;
      j["audio_path"] = relative(e.audio_path);
      j["duration_seconds"] = e.duration_seconds;
      j["role"] = to_string(e.role);
      if (e.transcript)
        j["transcript"] = *e.transcript;
      if (e.clean_path)
        j["clean_path"] = relative(*e.clean_path);
      if (e.snr_db)
        j["snr_db"] = *e.snr_db;
      if (e.noise_id)
        j["noise_id"] = *e.noise_id;
      if (e.seed)
        j["seed"] = *e.seed;
      os << j.dump() << '\n';
    }
  }

}
