#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/tensor.h"

namespace rssl {

  struct ConvLayerSpec {
    Index channels = 0;
    Index kernel = 0;
    Index stride = 1;

    bool operator==(const ConvLayerSpec&) const = default;
  };

  // Where the reconstruction module reads its input from.
  enum class ReconAttach { Context, Latent, Quantized };
  enum class ReconBottleneck { Crn, Blstm };
  enum class NegativeSource { All, Masked };

  std::string to_string(ReconAttach site);
  std::string to_string(ReconBottleneck kind);
  std::string to_string(NegativeSource source);
  ReconAttach recon_attach_from_string(const std::string& text);
  ReconBottleneck recon_bottleneck_from_string(const std::string& text);
  NegativeSource negative_source_from_string(const std::string& text);

  // Gumbel temperature max(floor, start * decay^step).
  struct GumbelSchedule {
    double start = 2.0;
    double floor = 0.5;
    double decay = 0.999;

    double at(std::int64_t step) const;
    bool operator==(const GumbelSchedule&) const = default;
  };

  struct ModelConfig {
    std::vector<ConvLayerSpec> encoder_layers{{64, 10, 5}, {64, 8, 4}, {64, 4, 2}};
    Index model_dim = 192;
    Index transformer_blocks = 4;
    Index attention_heads = 4;
    Index ffn_dim = 768;
    Index pos_conv_kernel = 15;

    Index quantizer_groups = 2;
    Index entries_per_group = 64;
    GumbelSchedule gumbel;

    double mask_prob = 0.065;
    Index mask_span = 10;
    Index num_negatives = 20;
    double contrastive_temperature = 0.1;

    ReconAttach recon_attach = ReconAttach::Context;
    ReconBottleneck recon_bottleneck = ReconBottleneck::Crn;
    Index recon_hidden = 64;

    // First character is the CTC blank.
    std::string vocab = "_ 'ABCDEFGHIJKLMNOPQRSTUVWXYZ";

    Index latent_dim() const { return encoder_layers.back().channels; }
    Index total_stride() const;
    Index frames(Index input_length) const;
    Index min_input_length() const;
    Index vocab_size() const { return static_cast<Index>(vocab.size()); }

    // Throws Config/InvalidConfig.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
  };

  nlohmann::json to_json(const ModelConfig& config);
  // Unknown keys are rejected; missing keys keep their defaults.
  ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

  // Rejects keys of `j` outside `allowed`, naming the section.
  void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& section);

}
