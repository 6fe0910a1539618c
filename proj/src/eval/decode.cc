#include "eval/decode.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "core/error.h"
#include "eval/text.h"

namespace rssl {

  namespace {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    double log_add(double a, double b) {
      if (a == kNegInf)
        return b;
      if (b == kNegInf)
        return a;
      const double m = std::max(a, b);
      return m + std::log1p(std::exp(-std::abs(a - b)));
    }

    struct PrefixState {
      double pb = kNegInf;   // summed, ending in blank
      double pnb = kNegInf;  // summed, ending in a label
      double vb = kNegInf;   // best alignment, ending in blank
      double vnb = kNegInf;  // best alignment, ending in a label
      double lm = 0.0;
    };

    using Prefix = std::vector<Index>;
  }

  void DecodeConfig::validate() const {
    if (beam_size < 1)
      fail(ErrorKind::Config, "InvalidConfig", "beam_size must be >= 1");
    if (!std::isfinite(lm_weight) || !std::isfinite(insertion_penalty))
      fail(ErrorKind::Config, "InvalidConfig", "lm_weight and insertion_penalty must be finite");
  }

  std::vector<Index> greedy_decode_labels(const Tensor& log_probs, Index blank) {
    std::vector<Index> out;
    Index prev = blank;
    for (Index t = 0; t < log_probs.rows(); ++t) {
      const double* row = log_probs.row(t);
      Index best = 0;
      for (Index v = 1; v < log_probs.cols(); ++v)
        if (row[v] > row[best])
          best = v;
      if (best != blank && best != prev)
        out.push_back(best);
      prev = best;
    }
    return out;
  }

  std::string greedy_decode(const Tensor& log_probs, const std::string& vocab) {
    return decode_labels(greedy_decode_labels(log_probs, 0), vocab);
  }

  std::vector<BeamHypothesis> beam_search(const Tensor& log_probs, const DecodeConfig& cfg, Index blank) {
    cfg.validate();
    const Index vocab = log_probs.cols();
    const CharNGramLM* lm = cfg.lm;
    if (lm && lm->symbols() != vocab)
      fail(ErrorKind::Config, "InvalidConfig", "language model vocabulary does not match the output layer");
    const double alpha = lm ? cfg.lm_weight : 0.0;
    auto fused = [&](const Prefix& p, const PrefixState& s, double acoustic) {
      return acoustic + alpha * s.lm + cfg.insertion_penalty * static_cast<double>(p.size());
    };

    std::map<Prefix, PrefixState> beam;
    beam[Prefix{}] = PrefixState{0.0, kNegInf, 0.0, kNegInf, 0.0};

    for (Index t = 0; t < log_probs.rows(); ++t) {
      const double* y = log_probs.row(t);
      std::map<Prefix, PrefixState> next;
      for (const auto& [prefix, st] : beam) {
        auto [self, fresh] = next.try_emplace(prefix);
        if (fresh)
          self->second.lm = st.lm;
        PrefixState& s = self->second;
        s.pb = log_add(s.pb, log_add(st.pb, st.pnb) + y[blank]);
        s.vb = std::max(s.vb, std::max(st.vb, st.vnb) + y[blank]);
        if (!prefix.empty()) {
          const Index last = prefix.back();
          s.pnb = log_add(s.pnb, st.pnb + y[last]);
          s.vnb = std::max(s.vnb, st.vnb + y[last]);
        }
        for (Index c = 0; c < vocab; ++c) {
          if (c == blank)
            continue;
          Prefix np = prefix;
          np.push_back(c);
          auto [it, created] = next.try_emplace(std::move(np));
          PrefixState& ns = it->second;
          if (created)
            ns.lm = st.lm + (lm ? lm->log_prob(prefix, c) : 0.0);
          if (!prefix.empty() && prefix.back() == c) {
            ns.pnb = log_add(ns.pnb, st.pb + y[c]);
            ns.vnb = std::max(ns.vnb, st.vb + y[c]);
          } else {
            ns.pnb = log_add(ns.pnb, log_add(st.pb, st.pnb) + y[c]);
            ns.vnb = std::max(ns.vnb, std::max(st.vb, st.vnb) + y[c]);
          }
        }
      }

      std::erase_if(next, [](const auto& kv) { return kv.second.pb == kNegInf && kv.second.pnb == kNegInf; });
      if (static_cast<Index>(next.size()) <= cfg.beam_size) {
        beam = std::move(next);
        continue;
      }
      std::vector<std::pair<double, const Prefix*>> ranked;
      ranked.reserve(next.size());
      for (const auto& [p, s] : next)
        ranked.emplace_back(fused(p, s, std::max(s.vb, s.vnb)), &p);
      // Stable on the prefix order of the map, so ties keep the smaller prefix.
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::map<Prefix, PrefixState> kept;
      for (Index i = 0; i < cfg.beam_size; ++i) {
        const Prefix& p = *ranked[static_cast<std::size_t>(i)].second;
        kept.emplace(p, next.at(p));
      }
      beam = std::move(kept);
    }

    std::vector<BeamHypothesis> out;
    for (const auto& [p, s] : beam) {
      BeamHypothesis h;
      h.labels = p;
      h.ctc_log_prob = log_add(s.pb, s.pnb);
      h.lm_log_prob = lm ? s.lm + lm->log_prob(p, 0) : 0.0;
      h.score = h.ctc_log_prob + alpha * h.lm_log_prob + cfg.insertion_penalty * static_cast<double>(p.size());
      out.push_back(std::move(h));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return out;
  }

  std::string beam_decode(const Tensor& log_probs, const DecodeConfig& cfg, const std::string& vocab) {
    const auto hyps = beam_search(log_probs, cfg);
    return hyps.empty() ? std::string() : decode_labels(hyps.front().labels, vocab);
  }

  std::string decode(const Tensor& log_probs, const DecodeConfig& cfg, const std::string& vocab) {
    if (cfg.mode == DecodeMode::Greedy)
      return greedy_decode(log_probs, vocab);
    return beam_decode(log_probs, cfg, vocab);
  }

}
