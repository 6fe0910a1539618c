#include "eval/text.h"

#include <cctype>
#include <sstream>

#include "core/error.h"

namespace rssl {

  std::string normalize_text(const std::string& text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char ch : text) {
      if (std::isspace(ch)) {
        pending_space = !out.empty();
        continue;
      }
      if (std::ispunct(ch) && ch != '\'')
        continue;
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(static_cast<char>(std::toupper(ch)));
    }
    return out;
  }

  std::vector<std::string> split_words(const std::string& text) {
    std::istringstream is(text);
    std::vector<std::string> words;
    for (std::string w; is >> w;)
      words.push_back(w);
    return words;
  }

  std::vector<Index> encode_labels(const std::string& text, const std::string& vocab) {
    std::vector<Index> labels;
    labels.reserve(text.size());
    for (char ch : text) {
      const auto pos = vocab.find(ch);
      if (pos == std::string::npos || pos == 0)
        fail(ErrorKind::Data, "BadTranscript", std::string("character '") + ch + "' is not in the vocabulary");
      labels.push_back(static_cast<Index>(pos));
    }
    return labels;
  }

  std::string decode_labels(const std::vector<Index>& labels, const std::string& vocab) {
    std::string out;
    out.reserve(labels.size());
    for (Index l : labels)
      out.push_back(vocab.at(static_cast<std::size_t>(l)));
    return out;
  }

}
