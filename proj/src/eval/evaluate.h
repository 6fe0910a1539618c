#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data/manifest.h"
#include "eval/decode.h"
#include "eval/lm.h"
#include "eval/wer.h"
#include "model/model.h"

namespace rssl {

  // Frame log-probabilities from the CTC head (no masking, no quantizer).
  Tensor utterance_log_probs(const Model& model, const std::vector<double>& waveform);

  struct UtteranceResult {
    std::string utt_id;
    std::string reference;
    std::string hypothesis;
    WerCounts counts;
    std::optional<std::string> error;
  };

  struct EvaluationResult {
    std::vector<UtteranceResult> utterances;
    WerCounts totals;
    Index failed = 0;

    // Pooled: total edit operations over total reference words.
    double corpus_wer() const { return totals.rate(); }
  };

  // Per-entry failures (missing transcript, unreadable audio, too short) are
  // recorded and skipped. Data/EmptyManifest for an empty manifest,
  // Data/NoScorableEntries when every entry failed.
  EvaluationResult evaluate(const Model& model, const Manifest& manifest, const DecodeConfig& cfg);

  // One record per utterance plus a final summary record.
  void write_results(const EvaluationResult& result, const std::filesystem::path& path);
  nlohmann::json summary_json(const EvaluationResult& result);

  struct DevItem {
    Tensor log_probs;
    std::string reference;
  };

  struct GridPoint {
    double lm_weight = 0.0;
    double insertion_penalty = 0.0;
    WerCounts counts;
  };

  struct TuneResult {
    double lm_weight = 0.0;
    double insertion_penalty = 0.0;
    double wer = 0.0;
    std::vector<GridPoint> grid;
  };

  // Exhaustive grid search for the lowest pooled dev WER with beam decoding.
  // Ties go to the smaller |lm_weight|, then the smaller |insertion_penalty|.
  // Config/EmptyGrid on an empty axis, Data/EmptyDevSet without items.
  TuneResult tune_lm_weights(const std::vector<DevItem>& dev, const CharNGramLM& lm,
                             const std::vector<double>& lm_weights, const std::vector<double>& insertion_penalties,
                             Index beam_size);

}
