#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "core/tensor.h"
#include "model/config.h"
#include "model/model.h"

namespace rssl {

  // On disk: "RSSLCKPT", u32 version, u64 header length, JSON header
  // (config, step, meta, tensor table), then every tensor as raw
  // little-endian float64 in table order. The payload is written verbatim, so
  // save -> load -> save reproduces it byte for byte.
  struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> adam_m;
    std::map<std::string, Tensor> adam_v;
    std::int64_t adam_steps = 0;
    std::int64_t step = 0;
    nlohmann::json meta = nlohmann::json::object();
  };

  void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
  Checkpoint load_checkpoint(const std::filesystem::path& path);

  // Raw tensor bytes following the header.
  std::string checkpoint_payload(const std::filesystem::path& path);

  Checkpoint checkpoint_from_model(const Model& model);
  Model model_from_checkpoint(const Checkpoint& ckpt);

}
