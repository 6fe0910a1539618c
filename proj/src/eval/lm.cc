#include "eval/lm.h"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "core/error.h"
#include "eval/text.h"

namespace rssl {

  using nlohmann::json;

  namespace {
    constexpr char kBos = static_cast<char>(0xff);
  }

  CharNGramLM::CharNGramLM(std::string vocab, int order, double add_k)
    : _vocab(std::move(vocab)), _order(order), _add_k(add_k) {
    if (_order < 1)
      fail(ErrorKind::Config, "InvalidConfig", "LM order must be >= 1");
    if (!(_add_k > 0.0))
      fail(ErrorKind::Config, "InvalidConfig", "LM add-k must be > 0");
    if (_vocab.size() < 2 || _vocab.size() > 255)
      fail(ErrorKind::Config, "InvalidConfig", "LM vocabulary must hold 2..255 symbols");
  }

  std::string CharNGramLM::context_key(const std::vector<Index>& history, int length) const {
    std::string key(static_cast<std::size_t>(length), kBos);
    const auto n = static_cast<int>(history.size());
    for (int i = 0; i < length; ++i) {
      const int src = n - length + i;
      if (src >= 0)
        key[static_cast<std::size_t>(i)] = static_cast<char>(history[static_cast<std::size_t>(src)]);
    }
    return key;
  }

  void CharNGramLM::train(const std::vector<std::string>& transcripts) {
    for (const auto& text : transcripts) {
      std::vector<Index> labels = encode_labels(normalize_text(text), _vocab);
      labels.push_back(0);
      std::vector<Index> history;
      for (Index next : labels) {
        for (int m = 0; m < _order; ++m) {
          auto& row = _counts[context_key(history, m)];
          if (row.empty())
            row.assign(_vocab.size(), 0.0);
          row[static_cast<std::size_t>(next)] += 1.0;
        }
        history.push_back(next);
      }
    }
  }

  double CharNGramLM::log_prob(const std::vector<Index>& history, Index next) const {
    if (next < 0 || next >= symbols())
      fail(ErrorKind::Internal, "BadLabel", "LM symbol out of range");
    const double v = static_cast<double>(_vocab.size());
    for (int m = _order - 1; m >= 0; --m) {
      auto it = _counts.find(context_key(history, m));
      if (it == _counts.end())
        continue;
      double total = 0.0;
      for (double c : it->second)
        total += c;
      if (total <= 0.0)
        continue;
      return std::log((it->second[static_cast<std::size_t>(next)] + _add_k) / (total + _add_k * v));
    }
    return -std::log(v);
  }

  double CharNGramLM::sentence_log_prob(const std::vector<Index>& labels) const {
    double lp = 0.0;
    std::vector<Index> history;
    for (Index l : labels) {
      lp += log_prob(history, l);
      history.push_back(l);
    }
    return lp + log_prob(history, 0);
  }

  void CharNGramLM::save(const std::filesystem::path& path) const {
    json counts = json::array();
    for (const auto& [key, row] : _counts) {
      std::vector<int> ctx;
      for (char ch : key)
        ctx.push_back(ch == kBos ? -1 : static_cast<unsigned char>(ch));
      counts.push_back({{"context", ctx}, {"counts", row}});
    }
    json j = {{"order", _order}, {"add_k", _add_k}, {"vocab", _vocab}, {"contexts", counts}};
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os)
      fail(ErrorKind::Io, "IoError", "cannot write " + path.string());
    os << j.dump() << '\n';
  }

  CharNGramLM CharNGramLM::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
      fail(ErrorKind::Io, "MissingLM", "cannot open language model " + path.string());
    try {
      json j = json::parse(is);
      CharNGramLM lm(j.at("vocab").get<std::string>(), j.at("order").get<int>(), j.at("add_k").get<double>());
      for (const auto& entry : j.at("contexts")) {
        std::string key;
        for (int c : entry.at("context").get<std::vector<int>>())
          key.push_back(c < 0 ? kBos : static_cast<char>(c));
        auto row = entry.at("counts").get<std::vector<double>>();
        if (row.size() != lm._vocab.size())
          fail(ErrorKind::Data, "BadLM", "count row width does not match the vocabulary");
        lm._counts[key] = std::move(row);
      }
      return lm;
    } catch (const json::exception& e) {
      fail(ErrorKind::Data, "BadLM", path.string() + ": " + e.what());
    }
  }

}
