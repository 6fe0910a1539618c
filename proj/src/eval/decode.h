#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/tensor.h"
#include "eval/lm.h"

namespace rssl {

  enum class DecodeMode { Greedy, Beam };

  struct DecodeConfig {
    DecodeMode mode = DecodeMode::Greedy;
    Index beam_size = 16;
    // Borrowed; fusion is off when null.
    const CharNGramLM* lm = nullptr;
    double lm_weight = 0.0;
    double insertion_penalty = 0.0;

    // Throws Config/InvalidConfig.
    void validate() const;
  };

  // Per-frame argmax (lowest index on ties), merge repeats, drop blanks.
  std::vector<Index> greedy_decode_labels(const Tensor& log_probs, Index blank = 0);
  std::string greedy_decode(const Tensor& log_probs, const std::string& vocab);

  struct BeamHypothesis {
    std::vector<Index> labels;
    // log P(labels | X) summed over alignments that survived pruning.
    double ctc_log_prob = 0.0;
    double lm_log_prob = 0.0;
    // ctc + lm_weight * lm + insertion_penalty * length.
    double score = 0.0;
  };

  // CTC prefix beam search. Each prefix carries both the summed probability
  // of its alignments and the probability of its best single alignment.
  // Pruning ranks prefixes by best-alignment score (plus fusion terms); the
  // returned hypotheses are ranked by summed score. With beam 1 and no LM
  // this follows the greedy path; with a beam that never prunes, the top
  // hypothesis is the exhaustive maximum of total probability. Returns the
  // surviving hypotheses, best first.
  std::vector<BeamHypothesis> beam_search(const Tensor& log_probs, const DecodeConfig& cfg, Index blank = 0);
  std::string beam_decode(const Tensor& log_probs, const DecodeConfig& cfg, const std::string& vocab);

  std::string decode(const Tensor& log_probs, const DecodeConfig& cfg, const std::string& vocab);

}
