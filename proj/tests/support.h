#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "core/rng.h"
#include "model/config.h"

namespace rssl::testing {

  // Fresh directory under the system temp dir, removed on destruction.
  class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
      static int counter = 0;
      _path = std::filesystem::temp_directory_path() /
              ("rssl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
      std::filesystem::remove_all(_path);
      std::filesystem::create_directories(_path);
    }
    ~TempDir() {
      std::error_code ec;
      std::filesystem::remove_all(_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return _path; }
    std::filesystem::path operator/(const std::string& leaf) const { return _path / leaf; }

  private:
    std::filesystem::path _path;
  };

  inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  }

  // Small geometry that keeps the real stride structure (R = 40).
  inline ModelConfig tiny_config() {
    ModelConfig c;
    c.encoder_layers = {{16, 10, 5}, {16, 8, 4}, {16, 4, 2}};
    c.model_dim = 16;
    c.transformer_blocks = 1;
    c.attention_heads = 2;
    c.ffn_dim = 32;
    c.pos_conv_kernel = 5;
    c.quantizer_groups = 2;
    c.entries_per_group = 4;
    c.num_negatives = 3;
    c.mask_prob = 0.3;
    c.mask_span = 2;
    c.recon_hidden = 8;
    c.vocab = "_ AB";
    return c;
  }

  inline std::vector<double> random_signal(std::size_t n, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x)
      v = scale * rng.normal();
    return x;
  }

}
