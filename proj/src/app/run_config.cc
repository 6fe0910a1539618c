#include "app/run_config.h"

#include <fstream>

#include "core/error.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  RunConfig::RunConfig() {
    pretrain.mode = TrainMode::Pretrain;
    continual.mode = TrainMode::Continual;
    finetune.mode = TrainMode::Finetune;
    finetune.learning_rate = default_learning_rate(TrainMode::Finetune);
  }

  const TrainSpec& RunConfig::spec(TrainMode mode) const {
    switch (mode) {
    case TrainMode::Pretrain: return pretrain;
    case TrainMode::Continual: return continual;
    case TrainMode::Finetune: return finetune;
    }
    return pretrain;
  }

  TrainSpec& RunConfig::spec(TrainMode mode) {
    return const_cast<TrainSpec&>(std::as_const(*this).spec(mode));
  }

  namespace {
    std::string to_string(DecodeMode m) {
      return m == DecodeMode::Greedy ? "greedy" : "beam";
    }

    DecodeMode decode_mode_from_string(const std::string& s) {
      if (s == "greedy")
        return DecodeMode::Greedy;
      if (s == "beam")
        return DecodeMode::Beam;
      fail(ErrorKind::Config, "InvalidConfig", "decode.mode must be greedy|beam, got '" + s + "'");
    }

    template <class T>
    void take(const json& j, const char* key, T& field) {
      if (j.contains(key))
        field = j.at(key).get<T>();
    }

    CorpusSettings corpus_from_json(const json& j, CorpusSettings c) {
      reject_unknown_keys(j, {"seed", "n_utts", "n_noise", "snr_min", "snr_max"}, "corpus");
      take(j, "seed", c.seed);
      take(j, "n_utts", c.n_utts);
      take(j, "n_noise", c.n_noise);
      take(j, "snr_min", c.snr_min);
      take(j, "snr_max", c.snr_max);
      if (c.n_utts <= 0 || c.n_noise <= 0)
        fail(ErrorKind::Config, "InvalidConfig", "corpus.n_utts and corpus.n_noise must be positive");
      if (c.snr_min > c.snr_max)
        fail(ErrorKind::Config, "InvalidConfig", "corpus.snr_min exceeds corpus.snr_max");
      return c;
    }

    DecodeSettings decode_from_json(const json& j, DecodeSettings d) {
      reject_unknown_keys(j, {"mode", "beam_size", "lm", "lm_weight", "insertion_penalty", "lm_order", "lm_add_k",
                              "tune_lm_weights", "tune_insertion_penalties"},
                          "decode");
      if (j.contains("mode"))
        d.mode = decode_mode_from_string(j.at("mode").get<std::string>());
      take(j, "beam_size", d.beam_size);
      if (j.contains("lm"))
        d.lm = j.at("lm").is_null() ? std::string() : j.at("lm").get<std::string>();
      if (d.lm == "none")
        d.lm.clear();
      take(j, "lm_weight", d.lm_weight);
      take(j, "insertion_penalty", d.insertion_penalty);
      take(j, "lm_order", d.lm_order);
      take(j, "lm_add_k", d.lm_add_k);
      take(j, "tune_lm_weights", d.tune_lm_weights);
      take(j, "tune_insertion_penalties", d.tune_insertion_penalties);
      decode_config(d, nullptr).validate();
      if (d.lm_order < 1 || !(d.lm_add_k > 0.0))
        fail(ErrorKind::Config, "InvalidConfig", "decode.lm_order must be >= 1 and decode.lm_add_k > 0");
      return d;
    }

    PipelineSettings pipeline_from_json(const json& j, PipelineSettings p) {
      reject_unknown_keys(j, {"test_utts", "dev_utts", "tune_lm"}, "pipeline");
      take(j, "test_utts", p.test_utts);
      take(j, "dev_utts", p.dev_utts);
      take(j, "tune_lm", p.tune_lm);
      if (p.test_utts < 1 || p.dev_utts < 0)
        fail(ErrorKind::Config, "InvalidConfig", "pipeline.test_utts must be >= 1 and dev_utts >= 0");
      return p;
    }

    AblationSettings ablation_from_json(const json& j, AblationSettings a) {
      reject_unknown_keys(j, {"cells"}, "ablation");
      take(j, "cells", a.cells);
      for (const auto& c : a.cells)
        parse_ablation_cell(c);
      return a;
    }
  }

  json to_json(const RunConfig& c) {
    const auto& d = c.decode;
    return {
      {"model", to_json(c.model)},
      {"train", {{"pretrain", to_json(c.pretrain)}, {"continual", to_json(c.continual)}, {"finetune", to_json(c.finetune)}}},
      {"decode", {
        {"mode", to_string(d.mode)},
        {"beam_size", d.beam_size},
        {"lm", d.lm.empty() ? json(nullptr) : json(d.lm)},
        {"lm_weight", d.lm_weight},
        {"insertion_penalty", d.insertion_penalty},
        {"lm_order", d.lm_order},
        {"lm_add_k", d.lm_add_k},
        {"tune_lm_weights", d.tune_lm_weights},
        {"tune_insertion_penalties", d.tune_insertion_penalties},
      }},
      {"corpus", {{"seed", c.corpus.seed}, {"n_utts", c.corpus.n_utts}, {"n_noise", c.corpus.n_noise},
                  {"snr_min", c.corpus.snr_min}, {"snr_max", c.corpus.snr_max}}},
      {"pipeline", {{"test_utts", c.pipeline.test_utts}, {"dev_utts", c.pipeline.dev_utts},
                    {"tune_lm", c.pipeline.tune_lm}}},
      {"ablation", {{"cells", c.ablation.cells}}},
    };
  }

  RunConfig run_config_from_json(const json& j) {
    if (!j.is_object())
      fail(ErrorKind::Config, "InvalidConfig", "configuration must be a JSON object");
    reject_unknown_keys(j, {"model", "train", "decode", "corpus", "pipeline", "ablation"}, "top level");
    RunConfig c;
    try {
      if (j.contains("model"))
        c.model = model_config_from_json(j.at("model"));
      if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown_keys(t, {"pretrain", "continual", "finetune"}, "train");
        for (TrainMode m : {TrainMode::Pretrain, TrainMode::Continual, TrainMode::Finetune})
          if (t.contains(to_string(m)))
            c.spec(m) = train_spec_from_json(t.at(to_string(m)), c.spec(m));
      }
      if (j.contains("decode"))
        c.decode = decode_from_json(j.at("decode"), c.decode);
      if (j.contains("corpus"))
        c.corpus = corpus_from_json(j.at("corpus"), c.corpus);
      if (j.contains("pipeline"))
        c.pipeline = pipeline_from_json(j.at("pipeline"), c.pipeline);
      if (j.contains("ablation"))
        c.ablation = ablation_from_json(j.at("ablation"), c.ablation);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "InvalidConfig", e.what());
    }
    return c;
  }

  RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path))
      fail(ErrorKind::Usage, "MissingConfig", "config file " + path.string() + " does not exist");
    std::ifstream is(path);
    json j;
    try {
      j = json::parse(is, nullptr, true, true);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "InvalidConfig", path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
  }

  RunConfig apply_overrides(const RunConfig& config, const json& patch) {
    json j = to_json(config);
    j.merge_patch(patch);
    return run_config_from_json(j);
  }

  void write_effective_config(const RunConfig& config, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream os(dir / "config.json");
    if (!os)
      fail(ErrorKind::Io, "IoError", "cannot write " + (dir / "config.json").string());
    os << to_json(config).dump(2) << '\n';
  }

  DecodeConfig decode_config(const DecodeSettings& s, const CharNGramLM* lm) {
    DecodeConfig d;
    d.mode = s.mode;
    d.beam_size = s.beam_size;
    d.lm = lm;
    d.lm_weight = s.lm_weight;
    d.insertion_penalty = s.insertion_penalty;
    return d;
  }

  std::pair<ReconAttach, ReconBottleneck> parse_ablation_cell(const std::string& cell) {
    const auto slash = cell.find('/');
    if (slash == std::string::npos)
      fail(ErrorKind::Config, "InvalidConfig", "ablation cell '" + cell + "' must read <attach>/<bottleneck>");
    return {recon_attach_from_string(cell.substr(0, slash)), recon_bottleneck_from_string(cell.substr(slash + 1))};
  }

}
