#include "model/config.h"

#include <algorithm>
#include <cmath>

#include "core/error.h"

namespace rssl {

  using nlohmann::json;

  std::string to_string(ReconAttach site) {
    switch (site) {
    case ReconAttach::Context: return "context";
    case ReconAttach::Latent: return "latent";
    case ReconAttach::Quantized: return "quantized";
    }
    return "context";
  }

  std::string to_string(ReconBottleneck kind) {
    return kind == ReconBottleneck::Crn ? "crn" : "blstm";
  }

  std::string to_string(NegativeSource source) {
    return source == NegativeSource::All ? "all" : "masked";
  }

  ReconAttach recon_attach_from_string(const std::string& text) {
    if (text == "context")
      return ReconAttach::Context;
    if (text == "latent")
      return ReconAttach::Latent;
    if (text == "quantized")
      return ReconAttach::Quantized;
    fail(ErrorKind::Config, "InvalidConfig", "recon_attach must be context|latent|quantized, got '" + text + "'");
  }

  ReconBottleneck recon_bottleneck_from_string(const std::string& text) {
    if (text == "crn")
      return ReconBottleneck::Crn;
    if (text == "blstm")
      return ReconBottleneck::Blstm;
    fail(ErrorKind::Config, "InvalidConfig", "recon_bottleneck must be crn|blstm, got '" + text + "'");
  }

  NegativeSource negative_source_from_string(const std::string& text) {
    if (text == "all")
      return NegativeSource::All;
    if (text == "masked")
      return NegativeSource::Masked;
    fail(ErrorKind::Config, "InvalidConfig", "negatives_from must be all|masked, got '" + text + "'");
  }

  double GumbelSchedule::at(std::int64_t step) const {
    return std::max(floor, start * std::pow(decay, static_cast<double>(step)));
  }

  Index ModelConfig::total_stride() const {
    Index r = 1;
    for (const auto& l : encoder_layers)
      r *= l.stride;
    return r;
  }

  Index ModelConfig::frames(Index input_length) const {
    Index len = input_length;
    for (const auto& l : encoder_layers) {
      if (len < l.kernel)
        return 0;
      len = (len - l.kernel) / l.stride + 1;
    }
    return len;
  }

  Index ModelConfig::min_input_length() const {
    Index len = 1;
    for (auto it = encoder_layers.rbegin(); it != encoder_layers.rend(); ++it)
      len = (len - 1) * it->stride + it->kernel;
    return len;
  }

  void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok)
        fail(ErrorKind::Config, "InvalidConfig", what);
    };
    require(!encoder_layers.empty(), "encoder_layers must not be empty");
    for (const auto& l : encoder_layers)
      require(l.channels > 0 && l.kernel > 0 && l.stride > 0, "encoder layer entries must be positive");
    require(model_dim > 0 && transformer_blocks >= 0 && ffn_dim > 0, "model sizes must be positive");
    require(attention_heads > 0 && model_dim % attention_heads == 0, "model_dim must be divisible by attention_heads");
    require(pos_conv_kernel > 0 && pos_conv_kernel % 2 == 1, "pos_conv_kernel must be odd");
    require(quantizer_groups > 0 && entries_per_group > 1, "quantizer needs groups >= 1 and entries >= 2");
    require(model_dim % quantizer_groups == 0, "model_dim must be divisible by quantizer_groups");
    require(gumbel.start > 0 && gumbel.floor > 0 && gumbel.decay > 0 && gumbel.decay <= 1, "invalid gumbel schedule");
    require(mask_prob >= 0.0 && mask_prob <= 1.0, "mask_prob must lie in [0, 1]");
    require(mask_span >= 1, "mask_span must be >= 1");
    require(num_negatives >= 1, "num_negatives must be >= 1");
    require(contrastive_temperature > 0.0, "contrastive_temperature must be > 0");
    require(recon_hidden > 0, "recon_hidden must be positive");
    require(vocab.size() >= 2, "vocab needs a blank and at least one symbol");
    std::string sorted = vocab;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "vocab symbols must be unique");
  }

  void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed, const std::string& section) {
    if (!j.is_object())
      fail(ErrorKind::Config, "InvalidConfig", "section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items())
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        fail(ErrorKind::Config, "UnknownKey", "unknown key '" + key + "' in section '" + section + "'");
  }

  json to_json(const ModelConfig& c) {
    json layers = json::array();
    for (const auto& l : c.encoder_layers)
      layers.push_back({l.channels, l.kernel, l.stride});
    return {
      {"encoder_layers", layers},
      {"model_dim", c.model_dim},
      {"transformer_blocks", c.transformer_blocks},
      {"attention_heads", c.attention_heads},
      {"ffn_dim", c.ffn_dim},
      {"pos_conv_kernel", c.pos_conv_kernel},
      {"quantizer_groups", c.quantizer_groups},
      {"entries_per_group", c.entries_per_group},
      {"gumbel_temperature", {{"start", c.gumbel.start}, {"floor", c.gumbel.floor}, {"decay", c.gumbel.decay}}},
      {"mask_prob", c.mask_prob},
      {"mask_span", c.mask_span},
      {"num_negatives", c.num_negatives},
      {"contrastive_temperature", c.contrastive_temperature},
      {"recon_attach", to_string(c.recon_attach)},
      {"recon_bottleneck", to_string(c.recon_bottleneck)},
      {"recon_hidden", c.recon_hidden},
      {"vocab", c.vocab},
    };
  }

  ModelConfig model_config_from_json(const json& j, ModelConfig c) {
    reject_unknown_keys(j, {"encoder_layers", "model_dim", "transformer_blocks", "attention_heads", "ffn_dim",
                            "pos_conv_kernel", "quantizer_groups", "entries_per_group", "gumbel_temperature",
                            "mask_prob", "mask_span", "num_negatives", "contrastive_temperature",
                            "recon_attach", "recon_bottleneck", "recon_hidden", "vocab"},
                        "model");
    try {
      if (j.contains("encoder_layers")) {
        c.encoder_layers.clear();
        for (const auto& l : j["encoder_layers"]) {
          if (!l.is_array() || l.size() != 3)
            fail(ErrorKind::Config, "InvalidConfig", "encoder_layers entries are [channels, kernel, stride]");
          c.encoder_layers.push_back({l[0].get<Index>(), l[1].get<Index>(), l[2].get<Index>()});
        }
      }
      auto take = [&](const char* key, auto& field) {
        if (j.contains(key))
          field = j[key].get<std::decay_t<decltype(field)>>();
      };
      take("model_dim", c.model_dim);
      take("transformer_blocks", c.transformer_blocks);
      take("attention_heads", c.attention_heads);
      take("ffn_dim", c.ffn_dim);
      take("pos_conv_kernel", c.pos_conv_kernel);
      take("quantizer_groups", c.quantizer_groups);
      take("entries_per_group", c.entries_per_group);
      if (j.contains("gumbel_temperature")) {
        const auto& g = j["gumbel_temperature"];
        reject_unknown_keys(g, {"start", "floor", "decay"}, "model.gumbel_temperature");
        c.gumbel.start = g.value("start", c.gumbel.start);
        c.gumbel.floor = g.value("floor", c.gumbel.floor);
        c.gumbel.decay = g.value("decay", c.gumbel.decay);
      }
      take("mask_prob", c.mask_prob);
      take("mask_span", c.mask_span);
      take("num_negatives", c.num_negatives);
      take("contrastive_temperature", c.contrastive_temperature);
      if (j.contains("recon_attach"))
        c.recon_attach = recon_attach_from_string(j["recon_attach"].get<std::string>());
      if (j.contains("recon_bottleneck"))
        c.recon_bottleneck = recon_bottleneck_from_string(j["recon_bottleneck"].get<std::string>());
      take("recon_hidden", c.recon_hidden);
      take("vocab", c.vocab);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "InvalidConfig", std::string("model section: ") + e.what());
    }
    c.validate();
    return c;
  }

}
