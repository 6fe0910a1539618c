#pragma once

#include <string>
#include <vector>

#include "core/tensor.h"

namespace rssl {

  // Uppercase, drop punctuation other than apostrophes, collapse runs of
  // whitespace, trim.
  std::string normalize_text(const std::string& text);

  std::vector<std::string> split_words(const std::string& text);

  // Vocabulary indices of a normalized transcript. Data/BadTranscript when a
  // character is outside the vocabulary or is the blank (index 0).
  std::vector<Index> encode_labels(const std::string& text, const std::string& vocab);
  std::string decode_labels(const std::vector<Index>& labels, const std::string& vocab);

}
