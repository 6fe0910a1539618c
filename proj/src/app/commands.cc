#include "app/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "core/error.h"
#include "model/checkpoint.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  namespace {
    void say(const LogFn& log, const std::string& msg) {
      if (log)
        log(msg);
    }

    std::ofstream open_out(const fs::path& path) {
      if (path.has_parent_path())
        fs::create_directories(path.parent_path());
      std::ofstream os(path);
      if (!os)
        fail(ErrorKind::Io, "IoError", "cannot write " + path.string());
      return os;
    }

    void require_file(const fs::path& path, const std::string& code, const std::string& what) {
      if (!fs::exists(path))
        fail(ErrorKind::Usage, code, what + " " + path.string() + " does not exist");
    }

    std::string fixed(double v, int precision) {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(precision);
      os << v;
      return os.str();
    }
  }

  ToyCorpus cmd_make_toy_corpus(const fs::path& out_dir, std::uint64_t seed, int n_utts, int n_noise) {
    if (n_utts <= 0 || n_noise <= 0)
      fail(ErrorKind::Usage, "InvalidArgument", "n_utts and n_noise must be positive");
    return make_toy_corpus(out_dir, seed, n_utts, n_noise);
  }

  CorpusBuildResult cmd_mix(const fs::path& clean_manifest, const fs::path& noise_manifest, const fs::path& out_dir,
                            const CorpusBuildOptions& options, const LogFn& log) {
    require_file(clean_manifest, "MissingManifest", "clean manifest");
    require_file(noise_manifest, "MissingManifest", "noise manifest");
    const Manifest clean = load_manifest(clean_manifest);
    const Manifest noise = load_manifest(noise_manifest);
    CorpusBuildResult result = build_noisy_corpus(clean, noise, out_dir, options);
    if (!result.errors.empty()) {
      std::ofstream os = open_out(out_dir / "mix_errors.jsonl");
      for (const auto& e : result.errors) {
        say(log, "mix: " + e.utterance_id + " skipped: " + e.message);
        os << json{{"utt_id", e.utterance_id}, {"code", e.code}, {"message", e.message}}.dump() << '\n';
      }
    }
    if (result.manifest.empty())
      fail(ErrorKind::Data, "EmptyManifest", "no pair could be mixed");
    say(log, "mix: wrote " + std::to_string(result.manifest.size()) + " pairs to " + (out_dir / "noisy.jsonl").string());
    return result;
  }

  TrainResult cmd_train(const RunConfig& config, TrainMode mode, const std::vector<fs::path>& data,
                        const std::optional<fs::path>& init, const fs::path& out_dir, const LogFn& log) {
    if (data.empty())
      fail(ErrorKind::Usage, "MissingData", "training needs at least one manifest");
    for (const auto& d : data)
      require_file(d, "MissingManifest", "manifest");
    if (init)
      require_file(*init, "MissingCheckpoint", "checkpoint");
    TrainSpec spec = config.spec(mode);
    spec.mode = mode;
    spec.data = data;
    spec.init_checkpoint = init;
    spec.out_dir = out_dir;
    write_effective_config(config, out_dir);
    TrainHooks hooks;
    hooks.log = log;
    return train(spec, config.model, hooks);
  }

  EvaluationResult cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, const fs::path& manifest,
                                const fs::path& results_path, const LogFn& log) {
    require_file(checkpoint, "MissingCheckpoint", "checkpoint");
    require_file(manifest, "MissingManifest", "manifest");
    const Model model = model_from_checkpoint(load_checkpoint(checkpoint));
    std::optional<CharNGramLM> lm;
    if (!config.decode.lm.empty()) {
      require_file(config.decode.lm, "MissingLm", "language model");
      lm = CharNGramLM::load(config.decode.lm);
    }
    const DecodeConfig cfg = decode_config(config.decode, lm ? &*lm : nullptr);
    const EvaluationResult result = evaluate(model, load_manifest(manifest), cfg);
    write_results(result, results_path);
    write_effective_config(config, results_path.has_parent_path() ? results_path.parent_path() : fs::path("."));
    for (const auto& u : result.utterances)
      if (u.error)
        say(log, "evaluate: " + u.utt_id + " skipped: " + *u.error);
    say(log, "evaluate: WER " + fixed(100.0 * result.corpus_wer(), 2) + "% over " +
               std::to_string(result.totals.ref_words) + " words");
    return result;
  }

  CharNGramLM cmd_build_lm(const std::vector<fs::path>& manifests, const std::string& vocab, int order, double add_k,
                           const fs::path& out_path) {
    std::vector<std::string> transcripts;
    for (const auto& m : manifests) {
      require_file(m, "MissingManifest", "manifest");
      for (const auto& e : load_manifest(m, false).entries)
        if (e.transcript)
          transcripts.push_back(*e.transcript);
    }
    if (transcripts.empty())
      fail(ErrorKind::Data, "MissingTranscript", "no transcripts to train a language model on");
    CharNGramLM lm(vocab, order, add_k);
    lm.train(transcripts);
    if (out_path.has_parent_path())
      fs::create_directories(out_path.parent_path());
    lm.save(out_path);
    return lm;
  }

  AblationReport cmd_ablate(const RunConfig& config, const fs::path& init, const std::vector<fs::path>& data,
                            const fs::path& eval_manifest, const fs::path& out_dir, const LogFn& log) {
    require_file(init, "MissingCheckpoint", "checkpoint");
    require_file(eval_manifest, "MissingManifest", "manifest");
    if (data.empty())
      fail(ErrorKind::Usage, "MissingData", "ablation needs at least one training manifest");
    std::optional<CharNGramLM> lm;
    if (!config.decode.lm.empty()) {
      require_file(config.decode.lm, "MissingLm", "language model");
      lm = CharNGramLM::load(config.decode.lm);
    }
    AblationPlan plan;
    for (const auto& c : config.ablation.cells) {
      const auto [attach, bottleneck] = parse_ablation_cell(c);
      plan.cells.push_back({attach, bottleneck});
    }
    plan.model = config.model;
    plan.continual = config.continual;
    plan.finetune = config.finetune;
    plan.init_checkpoint = init;
    plan.train_data = data;
    plan.eval_manifest = eval_manifest;
    plan.decode = decode_config(config.decode, lm ? &*lm : nullptr);
    plan.out_dir = out_dir;
    write_effective_config(config, out_dir);

    AblationReport report = run_ablation(plan, log);
    open_out(out_dir / "ablation.json") << to_json(report).dump(2) << '\n';
    open_out(out_dir / "ablation.md") << render_ablation_table(report);
    return report;
  }

  namespace {
    struct Series {
      std::string name;
      std::vector<std::pair<double, double>> points;
    };

    std::string render_svg(const std::vector<Series>& series) {
      const double W = 720, H = 420, L = 60, R = 150, T = 20, B = 40;
      double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
      for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
      if (x1 <= x0)
        x1 = x0 + 1;
      if (y1 <= y0)
        y1 = y0 + 1;
      auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
      auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
      static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#111111", "#9467bd", "#ff7f0e"};

      std::ostringstream os;
      os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
      os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
      os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
         << "\" stroke=\"black\"/>\n";
      os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"12\">step " << x0 << "</text>\n";
      os << "<text x=\"" << W - R - 60 << "\" y=\"" << H - 10 << "\" font-size=\"12\">step " << x1 << "</text>\n";
      os << "<text x=\"4\" y=\"" << T + 10 << "\" font-size=\"12\">" << fixed(y1, 3) << "</text>\n";
      os << "<text x=\"4\" y=\"" << H - B << "\" font-size=\"12\">" << fixed(y0, 3) << "</text>\n";
      for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* c = colors[i % std::size(colors)];
        os << "<polyline data-series=\"" << s.name << "\" data-points=\"" << s.points.size()
           << "\" fill=\"none\" stroke=\"" << c << "\" points=\"";
        for (const auto& [x, y] : s.points)
          os << fixed(px(x), 2) << ',' << fixed(py(y), 2) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (i + 1) << "\" font-size=\"12\" fill=\"" << c
           << "\">" << s.name << "</text>\n";
      }
      os << "</svg>\n";
      return os.str();
    }
  }

  PlotOutputs cmd_plot(const std::optional<fs::path>& metrics_log, const std::optional<fs::path>& ablation_report,
                       const fs::path& out_dir, const LogFn& log) {
    if (!metrics_log && !ablation_report)
      fail(ErrorKind::Usage, "InvalidArgument", "plot needs a metrics log or an ablation report");
    PlotOutputs out;
    fs::create_directories(out_dir);

    if (metrics_log) {
      require_file(*metrics_log, "MissingLog", "metrics log");
      static const std::vector<std::string> keys{"L_c", "L_d", "L_r", "ctc", "total"};
      std::map<std::string, Series> by_key;
      std::vector<std::pair<double, std::map<std::string, double>>> rows;
      std::ifstream is(*metrics_log);
      std::string line;
      Index lineno = 0;
      while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
          continue;
        try {
          const json j = json::parse(line);
          if (!j.is_object() || !j.contains("step") || !j.at("step").is_number())
            throw std::runtime_error("no numeric step");
          std::map<std::string, double> values;
          for (const auto& k : keys)
            if (j.contains(k) && j.at(k).is_number() && std::isfinite(j.at(k).get<double>()))
              values[k] = j.at(k).get<double>();
          if (values.empty())
            throw std::runtime_error("no loss values");
          rows.emplace_back(j.at("step").get<double>(), std::move(values));
        } catch (const std::exception& e) {
          ++out.skipped_lines;
          say(log, "warning: " + metrics_log->string() + ":" + std::to_string(lineno) + ": skipped malformed line (" +
                     e.what() + ")");
        }
      }
      if (rows.empty())
        fail(ErrorKind::Data, "EmptyLog", "metrics log " + metrics_log->string() + " holds no usable record");
      out.points = static_cast<Index>(rows.size());

      std::vector<Series> series;
      for (const auto& k : keys) {
        Series s{k, {}};
        for (const auto& [step, values] : rows)
          if (auto it = values.find(k); it != values.end())
            s.points.emplace_back(step, it->second);
        if (!s.points.empty())
          series.push_back(std::move(s));
      }
      const fs::path svg = out_dir / "loss_curves.svg";
      open_out(svg) << render_svg(series);
      const fs::path csv = out_dir / "loss_curves.csv";
      {
        std::ofstream os = open_out(csv);
        os << "step";
        for (const auto& s : series)
          os << ',' << s.name;
        os << '\n';
        os.precision(10);
        for (const auto& [step, values] : rows) {
          os << step;
          for (const auto& s : series) {
            os << ',';
            if (auto it = values.find(s.name); it != values.end())
              os << it->second;
          }
          os << '\n';
        }
      }
      out.files.push_back(svg);
      out.files.push_back(csv);
    }

    if (ablation_report) {
      require_file(*ablation_report, "MissingReport", "ablation report");
      std::ifstream is(*ablation_report);
      json j;
      try {
        j = json::parse(is);
      } catch (const json::exception& e) {
        fail(ErrorKind::Data, "BadReport", ablation_report->string() + ": " + e.what());
      }
      const AblationReport report = ablation_report_from_json(j);
      const fs::path md = out_dir / "ablation_table.md";
      open_out(md) << render_ablation_table(report);
      const fs::path csv = out_dir / "ablation_table.csv";
      {
        std::ofstream os = open_out(csv);
        os.precision(10);
        os << "label,recon_attach,recon_bottleneck,wer,continual_total,transformer_grad_max,gradient_check\n";
        for (const auto& r : report.rows) {
          os << r.label << ',' << to_string(r.cell.attach) << ',' << to_string(r.cell.bottleneck) << ',';
          if (r.wer)
            os << *r.wer;
          os << ',';
          if (r.continual_total)
            os << *r.continual_total;
          os << ',';
          if (r.transformer_grad_max)
            os << *r.transformer_grad_max;
          os << ',' << (r.gradient_check_passed ? (*r.gradient_check_passed ? "pass" : "fail") : "") << '\n';
        }
      }
      out.files.push_back(md);
      out.files.push_back(csv);
    }
    return out;
  }

  const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages{"corpus", "mix", "pretrain", "continual", "finetune", "evaluate"};
    return stages;
  }

  namespace {
    struct PipelinePaths {
      fs::path root;
      fs::path corpus() const { return root / "corpus"; }
      fs::path clean_manifest() const { return corpus() / "clean.jsonl"; }
      fs::path noise_manifest() const { return corpus() / "noise.jsonl"; }
      fs::path train_clean() const { return corpus() / "train_clean.jsonl"; }
      fs::path mixed() const { return root / "mixed"; }
      fs::path split(const std::string& name) const { return mixed() / (name + ".jsonl"); }
      fs::path stage_dir(const std::string& name) const { return root / name; }
      fs::path final_ckpt(const std::string& name) const { return stage_dir(name) / "final.ckpt"; }
    };

    json read_json_or_null(const fs::path& path) {
      if (!fs::exists(path))
        return nullptr;
      std::ifstream is(path);
      try {
        return json::parse(is);
      } catch (const json::exception&) {
        return nullptr;
      }
    }

    json train_summary(const TrainResult& r, TrainMode mode) {
      json j{{"steps", r.history.empty() ? 0 : r.history.back().step}, {"skipped_steps", r.skipped_steps}};
      if (!r.history.empty()) {
        j["first"] = to_json(r.history.front(), mode);
        j["last"] = to_json(r.history.back(), mode);
      }
      return j;
    }

    std::string render_summary(const json& s) {
      std::ostringstream os;
      os << "# Pipeline summary\n\n";
      os << "| Stage | Seconds | Result |\n|---|---|---|\n";
      for (const auto& name : pipeline_stages()) {
        if (!s.at("stages").contains(name))
          continue;
        const json& st = s.at("stages").at(name);
        std::string result;
        if (st.contains("first") && st.contains("last")) {
          const char* key = st.at("last").contains("ctc") ? "ctc" : "total";
          result = std::string(key) + " " + fixed(st.at("first").at(key).get<double>(), 4) + " -> " +
                   fixed(st.at("last").at(key).get<double>(), 4) + " over " + std::to_string(st.at("steps").get<long>()) +
                   " steps";
        } else if (st.contains("pairs")) {
          result = std::to_string(st.at("pairs").get<long>()) + " pairs, " + std::to_string(st.at("errors").get<long>()) +
                   " errors";
        } else if (st.contains("utterances")) {
          result = std::to_string(st.at("utterances").get<long>()) + " clean, " +
                   std::to_string(st.at("noise").get<long>()) + " noise clips";
        } else if (st.contains("wer_greedy")) {
          result = "greedy WER " + fixed(100.0 * st.at("wer_greedy").get<double>(), 2) + "%";
          if (st.contains("wer_lm"))
            result += ", beam+LM WER " + fixed(100.0 * st.at("wer_lm").get<double>(), 2) + "% (lm_weight " +
                      fixed(st.at("lm_weight").get<double>(), 2) + ", insertion_penalty " +
                      fixed(st.at("insertion_penalty").get<double>(), 2) + ")";
        }
        os << "| " << name << " | " << fixed(st.value("seconds", 0.0), 1) << " | " << result << " |\n";
      }
      return os.str();
    }

    json run_stage(const std::string& stage, const RunConfig& config, const PipelinePaths& p, const LogFn& log) {
      json out;
      if (stage == "corpus") {
        const auto& c = config.corpus;
        const int needed = config.pipeline.test_utts + config.pipeline.dev_utts + 1;
        if (c.n_utts < needed)
          fail(ErrorKind::Config, "InvalidConfig",
               "corpus.n_utts must leave at least one training utterance after the dev and test splits");
        const ToyCorpus corpus = cmd_make_toy_corpus(p.corpus(), c.seed, c.n_utts, c.n_noise);
        out = {{"utterances", corpus.clean.size()}, {"noise", corpus.noise.size()}};
      } else if (stage == "mix") {
        require_file(p.clean_manifest(), "MissingManifest", "clean manifest");
        CorpusBuildOptions options;
        options.seed = config.corpus.seed;
        options.snr_min = config.corpus.snr_min;
        options.snr_max = config.corpus.snr_max;
        const CorpusBuildResult built = cmd_mix(p.clean_manifest(), p.noise_manifest(), p.mixed(), options, log);

        const auto& all = built.manifest.entries;
        const std::size_t n_test = config.pipeline.test_utts, n_dev = config.pipeline.dev_utts;
        if (all.size() < n_test + n_dev + 1)
          fail(ErrorKind::Data, "TooFewUtterances",
               std::to_string(all.size()) + " mixed utterances cannot fill the train/dev/test splits");
        const std::size_t n_train = all.size() - n_test - n_dev;
        Manifest train, dev, test;
        train.entries.assign(all.begin(), all.begin() + n_train);
        dev.entries.assign(all.begin() + n_train, all.begin() + n_train + n_dev);
        test.entries.assign(all.begin() + n_train + n_dev, all.end());
        save_manifest(train, p.split("train"));
        save_manifest(dev, p.split("dev"));
        save_manifest(test, p.split("test"));

        // Clean counterparts of the training split for from-scratch pretraining.
        Manifest train_clean;
        for (const auto& e : train.entries) {
          ManifestEntry c;
          c.utterance_id = e.utterance_id;
          c.audio_path = *e.clean_path;
          c.duration_seconds = e.duration_seconds;
          c.transcript = e.transcript;
          c.role = Role::Clean;
          train_clean.entries.push_back(std::move(c));
        }
        save_manifest(train_clean, p.train_clean());
        out = {{"pairs", all.size()}, {"errors", built.errors.size()}, {"train", train.size()}, {"dev", dev.size()},
               {"test", test.size()}};
      } else if (stage == "pretrain") {
        require_file(p.train_clean(), "MissingManifest", "clean training manifest");
        const TrainResult r = cmd_train(config, TrainMode::Pretrain, {p.train_clean()}, std::nullopt,
                                        p.stage_dir("pretrain"), log);
        out = train_summary(r, TrainMode::Pretrain);
      } else if (stage == "continual") {
        require_file(p.final_ckpt("pretrain"), "MissingCheckpoint", "pretrained checkpoint");
        const TrainResult r = cmd_train(config, TrainMode::Continual, {p.split("train")}, p.final_ckpt("pretrain"),
                                        p.stage_dir("continual"), log);
        out = train_summary(r, TrainMode::Continual);
      } else if (stage == "finetune") {
        require_file(p.final_ckpt("continual"), "MissingCheckpoint", "continual checkpoint");
        const TrainResult r = cmd_train(config, TrainMode::Finetune, {p.split("train")}, p.final_ckpt("continual"),
                                        p.stage_dir("finetune"), log);
        out = train_summary(r, TrainMode::Finetune);
      } else if (stage == "evaluate") {
        require_file(p.final_ckpt("finetune"), "MissingCheckpoint", "fine-tuned checkpoint");
        require_file(p.split("test"), "MissingManifest", "test manifest");
        const fs::path dir = p.stage_dir("evaluate");
        const Model model = model_from_checkpoint(load_checkpoint(p.final_ckpt("finetune")));
        const Manifest test = load_manifest(p.split("test"));

        RunConfig greedy = config;
        greedy.decode.mode = DecodeMode::Greedy;
        greedy.decode.lm.clear();
        const EvaluationResult g = evaluate(model, test, decode_config(greedy.decode, nullptr));
        write_results(g, dir / "results_greedy.jsonl");
        out["wer_greedy"] = g.corpus_wer();
        say(log, "evaluate: greedy WER " + fixed(100.0 * g.corpus_wer(), 2) + "%");

        if (config.pipeline.tune_lm) {
          const fs::path lm_path = dir / "lm.json";
          const CharNGramLM lm = cmd_build_lm({p.split("train")}, config.model.vocab, config.decode.lm_order,
                                              config.decode.lm_add_k, lm_path);
          RunConfig fused = config;
          fused.decode.mode = DecodeMode::Beam;
          fused.decode.lm = lm_path.string();
          const Manifest dev = load_manifest(p.split("dev"));
          std::vector<DevItem> dev_items;
          for (const auto& e : dev.entries) {
            if (!e.transcript)
              continue;
            try {
              dev_items.push_back({utterance_log_probs(model, read_wav(e.audio_path).samples), *e.transcript});
            } catch (const Error& err) {
              say(log, "evaluate: dev " + e.utterance_id + " skipped: " + err.what());
            }
          }
          if (!dev_items.empty()) {
            const TuneResult t = tune_lm_weights(dev_items, lm, config.decode.tune_lm_weights,
                                                 config.decode.tune_insertion_penalties, config.decode.beam_size);
            fused.decode.lm_weight = t.lm_weight;
            fused.decode.insertion_penalty = t.insertion_penalty;
            out["dev_wer"] = t.wer;
          }
          const EvaluationResult f = evaluate(model, test, decode_config(fused.decode, &lm));
          write_results(f, dir / "results.jsonl");
          write_effective_config(fused, dir);
          out["wer_lm"] = f.corpus_wer();
          out["lm_weight"] = fused.decode.lm_weight;
          out["insertion_penalty"] = fused.decode.insertion_penalty;
          say(log, "evaluate: beam+LM WER " + fixed(100.0 * f.corpus_wer(), 2) + "%");
        } else {
          const EvaluationResult r = cmd_evaluate(config, p.final_ckpt("finetune"), p.split("test"),
                                                  dir / "results.jsonl", log);
          out["wer"] = r.corpus_wer();
          write_effective_config(config, dir);
        }
        out["failed"] = g.failed;
      } else {
        fail(ErrorKind::Usage, "UnknownStage", "unknown stage '" + stage + "'");
      }
      return out;
    }
  }

  json cmd_pipeline(const RunConfig& config, const fs::path& out_dir, const std::optional<std::string>& stage,
                    const LogFn& log) {
    const auto& stages = pipeline_stages();
    if (stage && std::find(stages.begin(), stages.end(), *stage) == stages.end())
      fail(ErrorKind::Usage, "UnknownStage",
           "unknown stage '" + *stage + "' (expected corpus|mix|pretrain|continual|finetune|evaluate)");
    const PipelinePaths paths{out_dir};
    fs::create_directories(out_dir);
    write_effective_config(config, out_dir);

    // Single-stage runs merge into whatever an earlier run recorded.
    json summary = read_json_or_null(out_dir / "summary.json");
    if (!summary.is_object() || !summary.contains("stages") || !stage)
      summary = {{"stages", json::object()}};

    for (const auto& name : stages) {
      if (stage && name != *stage)
        continue;
      say(log, "== stage " + name);
      const auto t0 = std::chrono::steady_clock::now();
      json result;
      try {
        result = run_stage(name, config, paths, log);
      } catch (const Error& e) {
        const std::string what = e.what();
        const std::string prefix = e.code() + ": ";
        const std::string msg = what.starts_with(prefix) ? what.substr(prefix.size()) : what;
        throw Error(e.kind(), e.code(), "stage " + name + ": " + msg);
      } catch (const std::exception& e) {
        throw Error(ErrorKind::Internal, "InternalError", "stage " + name + ": " + e.what());
      }
      result["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      summary["stages"][name] = result;
    }
    open_out(out_dir / "summary.json") << summary.dump(2) << '\n';
    open_out(out_dir / "summary.md") << render_summary(summary);
    return summary;
  }

}
