#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace rssl {

  // Character n-gram model over the label alphabet of a CTC vocabulary.
  // Symbols are vocabulary indices; index 0 (the CTC blank) stands for end of
  // sentence. Add-k estimates at the longest history that was observed,
  // backing off to shorter histories otherwise, so every conditional sums to 1.
  class CharNGramLM {
  public:
    CharNGramLM() = default;
    CharNGramLM(std::string vocab, int order = 4, double add_k = 0.1);

    // Transcripts are normalized first; Data/BadTranscript on characters
    // outside the vocabulary.
    void train(const std::vector<std::string>& transcripts);

    // log P(next | history), history being the labels emitted so far.
    double log_prob(const std::vector<Index>& history, Index next) const;
    double sentence_log_prob(const std::vector<Index>& labels) const;

    int order() const { return _order; }
    double add_k() const { return _add_k; }
    const std::string& vocab() const { return _vocab; }
    Index symbols() const { return static_cast<Index>(_vocab.size()); }

    void save(const std::filesystem::path& path) const;
    static CharNGramLM load(const std::filesystem::path& path);

  private:
    std::string context_key(const std::vector<Index>& history, int length) const;

    std::string _vocab;
    int _order = 4;
    double _add_k = 0.1;
    // History (as raw symbol bytes, BOS = 0xff) -> next-symbol counts.
    std::map<std::string, std::vector<double>> _counts;
  };

}
