#include "eval/wer.h"

#include <algorithm>

#include "core/error.h"
#include "eval/text.h"

namespace rssl {

  long edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
      prev[j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
      cur[0] = static_cast<long>(i);
      for (std::size_t j = 1; j <= b.size(); ++j) {
        const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
        cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
      }
      std::swap(prev, cur);
    }
    return prev[b.size()];
  }

  WerCounts wer_counts(const std::string& hypothesis, const std::string& reference) {
    const auto ref = split_words(normalize_text(reference));
    if (ref.empty())
      fail(ErrorKind::Data, "EmptyReference", "reference has no words");
    const auto hyp = split_words(normalize_text(hypothesis));
    return {edit_distance(hyp, ref), static_cast<long>(ref.size())};
  }

  double wer(const std::string& hypothesis, const std::string& reference) {
    return wer_counts(hypothesis, reference).rate();
  }

}
