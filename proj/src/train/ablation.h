#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eval/decode.h"
#include "model/config.h"
#include "train/trainer.h"

namespace rssl {

  struct AblationCell {
    ReconAttach attach = ReconAttach::Context;
    ReconBottleneck bottleneck = ReconBottleneck::Crn;
  };

  // Row label used in the report ("Proposed", "BeforeQuantization", ...).
  std::string ablation_label(const AblationCell& cell);

  struct AblationPlan {
    std::vector<AblationCell> cells;
    ModelConfig model;
    // data / init_checkpoint / out_dir are filled per cell.
    TrainSpec continual;
    TrainSpec finetune;
    std::filesystem::path init_checkpoint;
    std::vector<std::filesystem::path> train_data;
    std::filesystem::path eval_manifest;
    DecodeConfig decode;
    std::filesystem::path out_dir;
  };

  struct AblationRow {
    AblationCell cell;
    std::string label;
    std::optional<double> wer;
    std::optional<double> continual_total;
    std::optional<double> reconstruction_loss;
    // Largest |dL_r/dθ| over transformer parameters.
    std::optional<double> transformer_grad_max;
    // Zero exactly when the site bypasses the transformer.
    std::optional<bool> gradient_check_passed;
    std::string data_hash;
    std::optional<std::string> error;
  };

  struct AblationReport {
    std::vector<AblationRow> rows;
  };

  // FNV-1a over every sample of every entry of the manifests.
  std::string manifest_data_hash(const std::vector<std::filesystem::path>& manifests);

  // continual -> finetune -> evaluate per cell with shared seeds and data.
  // A failing cell records its error and the others continue.
  AblationReport run_ablation(const AblationPlan& plan, const std::function<void(const std::string&)>& log = {});

  nlohmann::json to_json(const AblationReport& report);
  AblationReport ablation_report_from_json(const nlohmann::json& j);
  // Markdown table with one row per cell.
  std::string render_ablation_table(const AblationReport& report);

}
