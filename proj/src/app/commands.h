#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "app/run_config.h"
#include "data/synthesis.h"
#include "data/toy_corpus.h"
#include "eval/evaluate.h"
#include "train/ablation.h"
#include "train/trainer.h"

namespace rssl {

  using LogFn = std::function<void(const std::string&)>;

  ToyCorpus cmd_make_toy_corpus(const std::filesystem::path& out_dir, std::uint64_t seed, int n_utts, int n_noise);

  // Per-entry failures are logged and listed in <out_dir>/mix_errors.jsonl;
  // Data/EmptyManifest when nothing could be mixed.
  CorpusBuildResult cmd_mix(const std::filesystem::path& clean_manifest, const std::filesystem::path& noise_manifest,
                            const std::filesystem::path& out_dir, const CorpusBuildOptions& options, const LogFn& log);

  TrainResult cmd_train(const RunConfig& config, TrainMode mode, const std::vector<std::filesystem::path>& data,
                        const std::optional<std::filesystem::path>& init, const std::filesystem::path& out_dir,
                        const LogFn& log);

  // Writes the per-utterance results file; the LM comes from decode.lm.
  EvaluationResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                                const std::filesystem::path& manifest, const std::filesystem::path& results_path,
                                const LogFn& log);

  CharNGramLM cmd_build_lm(const std::vector<std::filesystem::path>& manifests, const std::string& vocab, int order,
                           double add_k, const std::filesystem::path& out_path);

  // Writes <out_dir>/ablation.json and ablation.md.
  AblationReport cmd_ablate(const RunConfig& config, const std::filesystem::path& init,
                            const std::vector<std::filesystem::path>& data, const std::filesystem::path& eval_manifest,
                            const std::filesystem::path& out_dir, const LogFn& log);

  struct PlotOutputs {
    std::vector<std::filesystem::path> files;
    Index points = 0;
    Index skipped_lines = 0;
  };

  // Loss curves (SVG + CSV) from a metrics log and/or the ablation table
  // (markdown + CSV) from a report. Data/EmptyLog when the log holds no
  // usable record.
  PlotOutputs cmd_plot(const std::optional<std::filesystem::path>& metrics_log,
                       const std::optional<std::filesystem::path>& ablation_report,
                       const std::filesystem::path& out_dir, const LogFn& log);

  // Stages in order; a stage reads the artifacts earlier stages left in
  // out_dir, so any one of them can be rerun alone.
  const std::vector<std::string>& pipeline_stages();

  // Runs all stages, or just `stage`. Failures are rethrown with the stage
  // name prepended. Writes <out_dir>/summary.{json,md}.
  nlohmann::json cmd_pipeline(const RunConfig& config, const std::filesystem::path& out_dir,
                              const std::optional<std::string>& stage, const LogFn& log);

}
