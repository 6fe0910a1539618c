#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eval/decode.h"
#include "model/config.h"
#include "train/trainer.h"

namespace rssl {

  struct CorpusSettings {
    std::uint64_t seed = 7;
    int n_utts = 12;
    int n_noise = 4;
    int snr_min = 5;
    int snr_max = 20;
  };

  struct DecodeSettings {
    DecodeMode mode = DecodeMode::Greedy;
    Index beam_size = 16;
    // Path to a saved character LM; none when empty.
    std::string lm;
    double lm_weight = 0.0;
    double insertion_penalty = 0.0;
    int lm_order = 4;
    double lm_add_k = 0.1;
    std::vector<double> tune_lm_weights{0.0, 0.25, 0.5, 1.0};
    std::vector<double> tune_insertion_penalties{-1.0, 0.0, 1.0};
  };

  struct PipelineSettings {
    // Held out from the end of the mixed corpus.
    int test_utts = 4;
    int dev_utts = 2;
    bool tune_lm = true;
  };

  struct AblationSettings {
    std::vector<std::string> cells{"context/crn", "latent/crn", "quantized/crn", "context/blstm"};
  };

  // Everything a command needs; the file mirrors this layout section by
  // section and rejects unknown keys.
  struct RunConfig {
    ModelConfig model;
    TrainSpec pretrain;
    TrainSpec continual;
    TrainSpec finetune;
    DecodeSettings decode;
    CorpusSettings corpus;
    PipelineSettings pipeline;
    AblationSettings ablation;

    RunConfig();

    const TrainSpec& spec(TrainMode mode) const;
    TrainSpec& spec(TrainMode mode);
  };

  nlohmann::json to_json(const RunConfig& config);
  RunConfig run_config_from_json(const nlohmann::json& j);

  // Usage/MissingConfig when the file does not exist, Config/* on bad content.
  RunConfig load_run_config(const std::filesystem::path& path);

  // Applies a JSON merge patch on top of the current values and re-validates.
  RunConfig apply_overrides(const RunConfig& config, const nlohmann::json& patch);

  // Writes <dir>/config.json.
  void write_effective_config(const RunConfig& config, const std::filesystem::path& dir);

  DecodeConfig decode_config(const DecodeSettings& settings, const CharNGramLM* lm);

  // "context/crn" -> (Context, Crn); Config/InvalidConfig otherwise.
  std::pair<ReconAttach, ReconBottleneck> parse_ablation_cell(const std::string& cell);

}
