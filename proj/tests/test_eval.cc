#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "core/error.h"
#include "core/rng.h"
#include "data/toy_corpus.h"
#include "eval/decode.h"
#include "eval/evaluate.h"
#include "eval/lm.h"
#include "eval/text.h"
#include "eval/wer.h"
#include "support.h"

using namespace rssl;
using rssl::testing::TempDir;

namespace {

  Tensor random_log_probs(Index t, Index v, Rng& rng, double spread = 2.0) {
    Tensor lp(t, v);
    for (Index i = 0; i < t; ++i) {
      double z = 0.0;
      for (Index j = 0; j < v; ++j) {
        lp(i, j) = spread * rng.normal();
        z += std::exp(lp(i, j));
      }
      for (Index j = 0; j < v; ++j)
        lp(i, j) -= std::log(z);
    }
    return lp;
  }

  // Frames whose argmax follows `path` with probability 0.7.
  Tensor peaked(const std::vector<Index>& path, Index v) {
    Tensor lp(static_cast<Index>(path.size()), v, std::log(0.3 / static_cast<double>(v - 1)));
    for (std::size_t t = 0; t < path.size(); ++t)
      lp(static_cast<Index>(t), path[t]) = std::log(0.7);
    return lp;
  }

  std::vector<Index> collapse(const std::vector<Index>& path) {
    std::vector<Index> out;
    Index prev = -1;
    for (Index s : path) {
      if (s != prev && s != 0)
        out.push_back(s);
      prev = s;
    }
    return out;
  }

  // Total probability of every collapsed label string.
  std::map<std::vector<Index>, double> path_sums(const Tensor& lp) {
    const Index t = lp.rows(), v = lp.cols();
    Index paths = 1;
    for (Index i = 0; i < t; ++i)
      paths *= v;
    std::map<std::vector<Index>, double> sums;
    for (Index code = 0; code < paths; ++code) {
      std::vector<Index> path;
      double logp = 0.0;
      Index c = code;
      for (Index i = 0; i < t; ++i) {
        path.push_back(c % v);
        logp += lp(i, c % v);
        c /= v;
      }
      sums[collapse(path)] += std::exp(logp);
    }
    return sums;
  }

  long dp_edit(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<long>> d(a.size() + 1, std::vector<long>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i)
      d[i][0] = static_cast<long>(i);
    for (std::size_t j = 0; j <= b.size(); ++j)
      d[0][j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= a.size(); ++i)
      for (std::size_t j = 1; j <= b.size(); ++j)
        d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[a.size()][b.size()];
  }

  std::string random_words(Rng& rng) {
    static const char* lexicon[] = {"A", "B", "CAB", "BAD", "FACE", "DEAF"};
    const auto n = rng.uniform_int(1, 6);
    std::string s;
    for (std::int64_t i = 0; i < n; ++i)
      s += std::string(i ? " " : "") + lexicon[rng.uniform_int(0, 5)];
    return s;
  }

  const std::string kVocab = "_ ABCDEFGH";

}

TEST_CASE("greedy: collapse rules") {
  const std::string vocab = "_ab";
  CHECK(greedy_decode(peaked({1, 1, 0, 2}, 3), vocab) == "ab");
  CHECK(greedy_decode(peaked({0, 0, 0}, 3), vocab) == "");
  CHECK(greedy_decode(peaked({1, 0, 1}, 3), vocab) == "aa");
  CHECK(greedy_decode(peaked({1, 1, 1}, 3), vocab) == "a");
  Tensor tie(1, 3, std::log(1.0 / 3.0));
  CHECK(greedy_decode_labels(tie).empty());
}

TEST_CASE("beam: size 1 without an LM equals greedy on 100 random inputs") {
  Rng rng(100);
  DecodeConfig cfg;
  cfg.mode = DecodeMode::Beam;
  cfg.beam_size = 1;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor lp = random_log_probs(1 + static_cast<Index>(rng.uniform_int(0, 30)), 5, rng);
    const auto hyps = beam_search(lp, cfg);
    REQUIRE_FALSE(hyps.empty());
    CHECK(hyps.front().labels == greedy_decode_labels(lp));
  }
}

TEST_CASE("beam: an unpruned search returns the exhaustive maximum of total probability") {
  Rng rng(7);
  DecodeConfig cfg;
  cfg.mode = DecodeMode::Beam;
  cfg.beam_size = 64;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor lp = random_log_probs(3, 3, rng);
    const auto sums = path_sums(lp);
    const auto best = std::max_element(sums.begin(), sums.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    const auto hyps = beam_search(lp, cfg);
    CHECK(hyps.front().labels == best->first);
    CHECK(std::abs(hyps.front().ctc_log_prob - std::log(best->second)) < 1e-8);
    // Every prefix survives, so each hypothesis carries its exact path sum.
    CHECK(hyps.size() == sums.size());
    for (const auto& h : hyps)
      CHECK(std::abs(h.ctc_log_prob - std::log(sums.at(h.labels))) < 1e-8);
  }
}

TEST_CASE("beam: the unpruned best score bounds every smaller beam") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const Tensor lp = random_log_probs(4, 4, rng, 1.0);
    DecodeConfig cfg;
    cfg.mode = DecodeMode::Beam;
    cfg.beam_size = 1000;
    const double full = beam_search(lp, cfg).front().score;
    for (Index b : {1, 2, 3, 5, 8}) {
      cfg.beam_size = b;
      CHECK(beam_search(lp, cfg).front().score <= full + 1e-12);
    }
  }
}

TEST_CASE("beam: zero fusion weights make the LM irrelevant") {
  CharNGramLM lm(kVocab, 3, 0.5);
  lm.train({"BAD CAB", "FACE"});
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor lp = random_log_probs(8, 10, rng);
    DecodeConfig plain;
    plain.mode = DecodeMode::Beam;
    plain.beam_size = 4;
    DecodeConfig fused = plain;
    fused.lm = &lm;
    CHECK(beam_search(lp, plain).front().labels == beam_search(lp, fused).front().labels);
    CHECK(beam_decode(lp, plain, kVocab) == beam_decode(lp, fused, kVocab));
  }
}

TEST_CASE("beam: scores combine CTC, LM and insertion terms") {
  CharNGramLM lm(kVocab, 2, 0.1);
  lm.train({"AB", "BA", "ABBA"});
  Rng rng(11);
  const Tensor lp = random_log_probs(5, 10, rng);
  DecodeConfig cfg;
  cfg.mode = DecodeMode::Beam;
  cfg.beam_size = 8;
  cfg.lm = &lm;
  cfg.lm_weight = 0.7;
  cfg.insertion_penalty = 0.3;
  for (const auto& h : beam_search(lp, cfg)) {
    CHECK(h.lm_log_prob == doctest::Approx(lm.sentence_log_prob(h.labels)).epsilon(1e-12));
    CHECK(h.score == doctest::Approx(h.ctc_log_prob + 0.7 * h.lm_log_prob
                                     + 0.3 * static_cast<double>(h.labels.size())).epsilon(1e-12));
  }
  cfg.beam_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("lm: conditionals are distributions for seen and unseen histories") {
  CharNGramLM lm(kVocab, 4, 0.1);
  lm.train({"BAD CAB", "FACE BEAD", "DEAF", "CAB CAB"});
  Rng rng(4);
  std::vector<std::vector<Index>> histories{{}, {4}, {4, 2}, {4, 2, 5}, {9, 9, 9, 9, 9}};
  for (int i = 0; i < 30; ++i) {
    std::vector<Index> h;
    for (auto n = rng.uniform_int(0, 6); n > 0; --n)
      h.push_back(static_cast<Index>(rng.uniform_int(1, 9)));
    histories.push_back(h);
  }
  for (const auto& h : histories) {
    double s = 0.0;
    for (Index v = 0; v < lm.symbols(); ++v)
      s += std::exp(lm.log_prob(h, v));
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  // Seen continuations beat unseen ones.
  CHECK(lm.log_prob(encode_labels("CA", kVocab), encode_labels("B", kVocab)[0])
        > lm.log_prob(encode_labels("CA", kVocab), encode_labels("H", kVocab)[0]));
}

TEST_CASE("lm: save and load give identical scores") {
  TempDir dir("lm");
  CharNGramLM lm(kVocab, 3, 0.2);
  lm.train({"BAD CAB", "FACE"});
  lm.save(dir / "lm.json");
  const CharNGramLM back = CharNGramLM::load(dir / "lm.json");
  CHECK(back.order() == 3);
  CHECK(back.add_k() == 0.2);
  const auto labels = encode_labels("CAB FACE", kVocab);
  CHECK(back.sentence_log_prob(labels) == lm.sentence_log_prob(labels));
  CHECK_THROWS_AS(CharNGramLM::load(dir / "nope.json"), Error);
  CHECK_THROWS_AS(lm.train({"XYZ"}), Error);
}

TEST_CASE("wer: worked cases") {
  CHECK(wer("a b c", "a b c") == 0.0);
  CHECK(wer("a x c", "a b c") == doctest::Approx(1.0 / 3.0));
  CHECK(wer("", "a b") == 1.0);
  CHECK(wer("hello,  World!", "HELLO world") == 0.0);
  CHECK(wer("don't", "DON'T") == 0.0);
  try {
    wer("a", "  ");
    FAIL("expected EmptyReference");
  } catch (const Error& e) {
    CHECK(e.code() == "EmptyReference");
  }
}

TEST_CASE("wer: matches a DP edit-distance oracle on 50 random pairs") {
  Rng rng(50);
  for (int i = 0; i < 50; ++i) {
    const std::string h = rng.uniform() < 0.1 ? "" : random_words(rng);
    const std::string r = random_words(rng);
    const auto hw = split_words(normalize_text(h)), rw = split_words(normalize_text(r));
    const long oracle = dp_edit(hw, rw);
    CHECK(wer_counts(h, r).errors == oracle);
    CHECK(std::abs(wer(h, r) - static_cast<double>(oracle) / static_cast<double>(rw.size())) < 1e-8);
    CHECK(edit_distance(hw, rw) == edit_distance(rw, hw));
  }
}

TEST_CASE("wer: corpus rate pools edits over reference words") {
  WerCounts total;
  total += wer_counts("A", "A");
  total += wer_counts("X Y Z", "A B C");
  CHECK(total.errors == 3);
  CHECK(total.ref_words == 4);
  CHECK(total.rate() == 0.75);

  WerCounts reversed;
  reversed += wer_counts("X Y Z", "A B C");
  reversed += wer_counts("A", "A");
  CHECK(reversed.rate() == total.rate());
}

TEST_CASE("text: normalization and label encoding") {
  CHECK(normalize_text("  it's   a\tTest, ok. ") == "IT'S A TEST OK");
  const auto labels = encode_labels("CAB A", kVocab);
  CHECK(labels == std::vector<Index>{4, 2, 3, 1, 2});
  CHECK(decode_labels(labels, kVocab) == "CAB A");
  CHECK_THROWS_AS(encode_labels("CAZ", kVocab), Error);
}

TEST_CASE("tune: grid search equals direct re-evaluation of every cell") {
  CharNGramLM lm(kVocab, 3, 0.1);
  lm.train({"BAD CAB", "FACE BAD", "CAB"});
  Rng rng(21);
  std::vector<DevItem> dev;
  for (const char* ref : {"BAD CAB", "FACE", "CAB BAD"})
    dev.push_back({random_log_probs(12, 10, rng, 1.5), ref});
  const std::vector<double> weights{0.0, 1.0}, penalties{-1.0, 0.0, 2.0};
  const TuneResult r = tune_lm_weights(dev, lm, weights, penalties, 4);
  REQUIRE(r.grid.size() == 6);

  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> arg;
  for (double w : weights)
    for (double p : penalties) {
      DecodeConfig cfg;
      cfg.mode = DecodeMode::Beam;
      cfg.beam_size = 4;
      cfg.lm = &lm;
      cfg.lm_weight = w;
      cfg.insertion_penalty = p;
      WerCounts c;
      for (const auto& d : dev)
        c += wer_counts(beam_decode(d.log_probs, cfg, kVocab), d.reference);
      const auto cell = std::find_if(r.grid.begin(), r.grid.end(), [&](const GridPoint& g) {
        return g.lm_weight == w && g.insertion_penalty == p;
      });
      REQUIRE(cell != r.grid.end());
      CHECK(cell->counts.errors == c.errors);
      const bool better = c.rate() < best
                          || (c.rate() == best && (std::abs(w) < std::abs(arg.first)
                                                   || (std::abs(w) == std::abs(arg.first) && std::abs(p) < std::abs(arg.second))));
      if (better) {
        best = c.rate();
        arg = {w, p};
      }
    }
  CHECK(r.wer == best);
  CHECK(r.lm_weight == arg.first);
  CHECK(r.insertion_penalty == arg.second);
}

TEST_CASE("tune: single point, zero-WER tie break and empty inputs") {
  CharNGramLM lm(kVocab, 2, 0.1);
  lm.train({"CAB"});
  const std::vector<Index> path{4, 0, 2, 0, 3};  // C _ A _ B
  std::vector<DevItem> dev{{peaked(path, 10), "CAB"}};

  const TuneResult one = tune_lm_weights(dev, lm, {0.5}, {1.0}, 3);
  CHECK(one.lm_weight == 0.5);
  CHECK(one.insertion_penalty == 1.0);

  const TuneResult tie = tune_lm_weights(dev, lm, {0.5, 0.0, -0.25}, {0.5, 0.0}, 3);
  CHECK(tie.wer == 0.0);
  CHECK(tie.lm_weight == 0.0);
  CHECK(tie.insertion_penalty == 0.0);

  CHECK_THROWS_AS(tune_lm_weights(dev, lm, {}, {0.0}, 3), Error);
  CHECK_THROWS_AS(tune_lm_weights({}, lm, {0.0}, {0.0}, 3), Error);
}

TEST_CASE("evaluate: per-entry failures are isolated, empty manifests rejected") {
  TempDir dir("evaluate");
  ToyCorpus toy = make_toy_corpus(dir / "toy", 3, 3, 1);
  ModelConfig c = rssl::testing::tiny_config();
  c.vocab = kVocab;
  const Model model(c, 5, {false, true});

  Manifest m = toy.clean;
  m.entries[1].transcript.reset();
  DecodeConfig cfg;
  const EvaluationResult r = evaluate(model, m, cfg);
  CHECK(r.failed == 1);
  REQUIRE(r.utterances.size() == 3);
  CHECK(r.utterances[1].error.has_value());
  long words = 0;
  for (const auto& u : r.utterances)
    if (!u.error)
      words += static_cast<long>(split_words(u.reference).size());
  CHECK(r.totals.ref_words == words);

  write_results(r, dir / "results.jsonl");
  CHECK(std::filesystem::file_size(dir / "results.jsonl") > 0);
  CHECK(summary_json(r)["failed"] == 1);

  try {
    evaluate(model, Manifest{}, cfg);
    FAIL("expected EmptyManifest");
  } catch (const Error& e) {
    CHECK(e.code() == "EmptyManifest");
  }
  const Model headless(c, 5);
  CHECK_THROWS_AS(evaluate(headless, toy.clean, cfg), Error);
}
