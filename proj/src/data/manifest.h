#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rssl {

  enum class Role { Clean, Noisy, Noise };

  std::string to_string(Role role);
  Role role_from_string(const std::string& text);

  struct ManifestEntry {
    std::string utterance_id;
    std::filesystem::path audio_path;
    double duration_seconds = 0.0;
    std::optional<std::string> transcript;
    Role role = Role::Clean;

    // Set on noisy entries produced by corpus building.
    std::optional<std::filesystem::path> clean_path;
    std::optional<double> snr_db;
    std::optional<std::string> noise_id;
    std::optional<std::uint64_t> seed;
  };

  // JSON-lines file, one self-contained record per line. Relative paths are
  // interpreted against the manifest's directory.
  struct Manifest {
    std::vector<ManifestEntry> entries;

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
  };

  // Unique ids and positive durations; optionally every path must exist.
  void validate_manifest(const Manifest& manifest, bool check_paths);

  Manifest load_manifest(const std::filesystem::path& path, bool check_paths = true);
  void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}
