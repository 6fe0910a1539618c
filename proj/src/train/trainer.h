#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/rng.h"
#include "losses/losses.h"
#include "model/checkpoint.h"
#include "model/model.h"
#include "train/optimizer.h"

namespace rssl {

  enum class TrainMode { Pretrain, Continual, Finetune };

  std::string to_string(TrainMode mode);
  TrainMode train_mode_from_string(const std::string& text);

  struct TrainSpec {
    TrainMode mode = TrainMode::Pretrain;
    std::int64_t steps = 100;
    std::int64_t batch_size = 4;
    // Defaults per mode come from default_learning_rate().
    double learning_rate = 5e-4;
    std::int64_t warmup_steps = 0;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> init_checkpoint;
    std::vector<std::filesystem::path> data;
    // Fine-tuning only; unset freezes the feature encoder for the whole run.
    std::optional<std::int64_t> freeze_encoder_steps;
    NegativeSource negatives_from = NegativeSource::Masked;
    LossWeights weights;
    double grad_clip = 5.0;
    bool freeze_quantizer = false;
    // 0 disables periodic checkpoints; the final one is always written.
    std::int64_t checkpoint_every = 0;
    std::int64_t log_every = 10;
    // No files are written when empty.
    std::filesystem::path out_dir;

    // Throws Config/InvalidConfig.
    void validate() const;
  };

  double default_learning_rate(TrainMode mode);

  nlohmann::json to_json(const TrainSpec& spec);
  // Keys other than mode/data/init_checkpoint/out_dir; unknown keys rejected.
  TrainSpec train_spec_from_json(const nlohmann::json& j, TrainSpec base = {});

  // In-memory training example.
  struct TrainItem {
    std::string id;
    std::vector<double> input;
    // Clean target of a noisy input.
    std::optional<std::vector<double>> target;
    std::vector<Index> labels;
    std::string transcript;
  };

  // Reads every entry of the manifests. Continual mode needs clean_path on
  // each entry (Data/MissingCleanTarget) when reconstruction is weighted;
  // fine-tuning needs transcripts (Data/MissingTranscript).
  std::vector<TrainItem> load_training_items(const std::vector<std::filesystem::path>& manifests, TrainMode mode,
                                             const ModelConfig& config, bool need_targets);

  // K indices per masked step, each different from its step, drawn uniformly
  // from the pool (masked steps or all steps). Without replacement when the
  // pool holds at least K candidates. An empty pool under the masked source
  // falls back to all steps; Data/EmptyPool when that is empty too.
  std::vector<std::vector<Index>> sample_negatives(Index frames, const std::vector<Index>& masked, Index k,
                                                   Rng& rng, NegativeSource source);

  struct StepRecord {
    std::int64_t step = 0;
    LossBreakdown losses;
    double ctc = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    bool skipped = false;
  };

  nlohmann::json to_json(const StepRecord& record, TrainMode mode);

  // Items of the batch consumed at `step`, as a pure function of (seed, step):
  // a fresh seeded permutation per epoch, read in consecutive slices.
  std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::int64_t batch_size, std::uint64_t seed,
                                         std::int64_t step);

  struct StepRandomness {
    std::uint64_t seed = 0;
    std::int64_t step = 0;
  };

  // Forward pass plus the weighted pretraining objective over a batch: contrastive loss
  // averaged over every masked step in the batch, diversity over the averaged
  // code distribution of all frames, reconstruction L1 averaged over every
  // sample. Undefined total when no masked step has a usable pool.
  struct PretrainObjective {
    Var total;
    Var contrastive;
    Var diversity;
    Var reconstruction;
    LossBreakdown breakdown;
  };
  PretrainObjective pretrain_objective(const Model& model, const std::vector<const TrainItem*>& batch,
                                       const TrainSpec& spec, StepRandomness randomness, bool with_reconstruction);

  // Mean CTC loss over the batch; items whose labels cannot fit are skipped.
  Var finetune_objective(const Model& model, const std::vector<const TrainItem*>& batch);

  struct TrainHooks {
    std::function<void(const std::string&)> log;
    std::function<void(const StepRecord&)> on_step;
  };

  struct TrainResult {
    Model model;
    std::vector<StepRecord> history;
    std::optional<std::filesystem::path> final_checkpoint;
    std::int64_t skipped_steps = 0;
  };

  // Full run for spec.mode. Pretraining without init_checkpoint builds a fresh
  // model from `config`; otherwise the checkpoint's architecture must match
  // `config` up to the reconstruction module and CTC head (ConfigMismatch).
  // A checkpoint written by the same mode resumes: step counter, optimizer
  // moments and the metrics log continue from it.
  TrainResult train(const TrainSpec& spec, const ModelConfig& config, const TrainHooks& hooks = {});

  // One optimizer update; exposed for tests and resume checks.
  class Trainer {
  public:
    Trainer(TrainSpec spec, Model model, std::vector<TrainItem> items, std::int64_t start_step = 0);

    StepRecord step();
    std::int64_t current_step() const { return _step; }
    Model& model() { return _model; }
    const Model& model() const { return _model; }
    Adam& optimizer() { return _adam; }

    Checkpoint checkpoint() const;
    // Restores parameters, moments and the step counter.
    void restore(const Checkpoint& ckpt);

  private:
    TrainSpec _spec;
    Model _model;
    std::vector<TrainItem> _items;
    Adam _adam;
    std::int64_t _step = 0;
  };

  // Names of parameters that reconstruction gradients reached in one
  // objective evaluation: maps parameter -> max |dL_r/dp|.
  std::map<std::string, double> reconstruction_gradient_norms(const Model& model, const TrainItem& item,
                                                              const TrainSpec& spec);

}
