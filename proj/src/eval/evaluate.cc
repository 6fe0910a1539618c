#include "eval/evaluate.h"

#include <cmath>
#include <fstream>

#include "core/error.h"
#include "data/audio.h"
#include "eval/text.h"

namespace rssl {

  using nlohmann::json;

  Tensor utterance_log_probs(const Model& model, const std::vector<double>& waveform) {
    ag::NoGradGuard no_grad;
    ForwardOptions opts;
    opts.run_quantizer = false;
    const Representations rep = model.forward(waveform, opts);
    return model.ctc_log_probs(rep.c).value();
  }

  EvaluationResult evaluate(const Model& model, const Manifest& manifest, const DecodeConfig& cfg) {
    cfg.validate();
    if (manifest.empty())
      fail(ErrorKind::Data, "EmptyManifest", "evaluation manifest has no entries");
    if (!model.has_ctc_head())
      fail(ErrorKind::Usage, "MissingCtcHead", "checkpoint has no CTC head; fine-tune it first");
    EvaluationResult result;
    for (const auto& e : manifest.entries) {
      UtteranceResult u;
      u.utt_id = e.utterance_id;
      try {
        if (!e.transcript)
          fail(ErrorKind::Data, "MissingTranscript", "entry has no transcript");
        u.reference = *e.transcript;
        const AudioClip clip = read_wav(e.audio_path);
        validate_clip(clip);
        u.hypothesis = decode(utterance_log_probs(model, clip.samples), cfg, model.config().vocab);
        u.counts = wer_counts(u.hypothesis, u.reference);
        result.totals += u.counts;
      } catch (const Error& err) {
        u.error = err.code() + ": " + err.what();
        ++result.failed;
      }
      result.utterances.push_back(std::move(u));
    }
    if (result.totals.ref_words == 0)
      fail(ErrorKind::Data, "NoScorableEntries", "no manifest entry could be scored");
    return result;
  }

  json summary_json(const EvaluationResult& r) {
    return {
      {"summary", true},
      {"corpus_wer", r.corpus_wer()},
      {"errors", r.totals.errors},
      {"ref_words", r.totals.ref_words},
      {"utterances", r.utterances.size()},
      {"failed", r.failed},
    };
  }

  void write_results(const EvaluationResult& r, const std::filesystem::path& path) {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os)
      fail(ErrorKind::Io, "IoError", "cannot write " + path.string());
    for (const auto& u : r.utterances) {
      json j = {{"utt_id", u.utt_id}, {"ref", u.reference}};
      if (u.error) {
        j["error"] = *u.error;
      } else {
        j["hyp"] = u.hypothesis;
        j["errors"] = u.counts.errors;
        j["ref_words"] = u.counts.ref_words;
      }
      os << j.dump() << '\n';
    }
    os << summary_json(r).dump() << '\n';
  }

  TuneResult tune_lm_weights(const std::vector<DevItem>& dev, const CharNGramLM& lm,
                             const std::vector<double>& lm_weights, const std::vector<double>& insertion_penalties,
                             Index beam_size) {
    if (lm_weights.empty() || insertion_penalties.empty())
      fail(ErrorKind::Config, "EmptyGrid", "LM weight grid has an empty axis");
    if (dev.empty())
      fail(ErrorKind::Data, "EmptyDevSet", "LM weight tuning needs a development set");
    TuneResult best;
    bool have = false;
    auto better = [](const GridPoint& a, const GridPoint& b) {
      // a and b have equal reference word totals.
      if (a.counts.errors != b.counts.errors)
        return a.counts.errors < b.counts.errors;
      if (std::abs(a.lm_weight) != std::abs(b.lm_weight))
        return std::abs(a.lm_weight) < std::abs(b.lm_weight);
      return std::abs(a.insertion_penalty) < std::abs(b.insertion_penalty);
    };
    GridPoint winner;
    for (double w : lm_weights)
      for (double p : insertion_penalties) {
        DecodeConfig cfg;
        cfg.mode = DecodeMode::Beam;
        cfg.beam_size = beam_size;
        cfg.lm = &lm;
        cfg.lm_weight = w;
        cfg.insertion_penalty = p;
        GridPoint point{w, p, {}};
        for (const auto& item : dev)
          point.counts += wer_counts(decode_labels(beam_search(item.log_probs, cfg).front().labels, lm.vocab()),
                                     item.reference);
        best.grid.push_back(point);
        if (!have || better(point, winner)) {
          winner = point;
          have = true;
        }
      }
    best.lm_weight = winner.lm_weight;
    best.insertion_penalty = winner.insertion_penalty;
    best.wer = winner.counts.rate();
    return best;
  }

}
