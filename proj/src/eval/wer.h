#pragma once

#include <string>
#include <vector>

namespace rssl {

  struct WerCounts {
    long errors = 0;
    long ref_words = 0;

    double rate() const { return static_cast<double>(errors) / static_cast<double>(ref_words); }
    WerCounts& operator+=(const WerCounts& o) {
      errors += o.errors;
      ref_words += o.ref_words;
      return *this;
    }
  };

  // Levenshtein distance over tokens (unit substitution/insertion/deletion).
  long edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

  // Both strings are normalized and split on whitespace. Data/EmptyReference
  // when the reference has no words.
  WerCounts wer_counts(const std::string& hypothesis, const std::string& reference);
  double wer(const std::string& hypothesis, const std::string& reference);

}
