#include "train/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/error.h"
#include "data/audio.h"
#include "data/manifest.h"
#include "eval/text.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  std::string to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::Pretrain: return "pretrain";
    case TrainMode::Continual: return "continual";
    case TrainMode::Finetune: return "finetune";
    }
    return "pretrain";
  }

  TrainMode train_mode_from_string(const std::string& text) {
    if (text == "pretrain")
      return TrainMode::Pretrain;
    if (text == "continual")
      return TrainMode::Continual;
    if (text == "finetune")
      return TrainMode::Finetune;
    fail(ErrorKind::Config, "InvalidConfig", "mode must be pretrain|continual|finetune, got '" + text + "'");
  }

  double default_learning_rate(TrainMode mode) {
    return mode == TrainMode::Finetune ? 2e-4 : 5e-4;
  }

  void TrainSpec::validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok)
        fail(ErrorKind::Config, "InvalidConfig", msg);
    };
    require(steps > 0, "steps must be > 0");
    require(batch_size > 0, "batch_size must be > 0");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be > 0");
    require(warmup_steps >= 0, "warmup_steps must be >= 0");
    require(!freeze_encoder_steps || *freeze_encoder_steps >= 0, "freeze_encoder_steps must be >= 0");
    require(weights.diversity >= 0.0 && weights.reconstruction >= 0.0, "loss weights must be >= 0");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    require(log_every >= 0, "log_every must be >= 0");
  }

  json to_json(const TrainSpec& s) {
    json j = {
      {"steps", s.steps},
      {"batch_size", s.batch_size},
      {"learning_rate", s.learning_rate},
      {"warmup_steps", s.warmup_steps},
      {"seed", s.seed},
      {"freeze_encoder_steps", s.freeze_encoder_steps ? json(*s.freeze_encoder_steps) : json(nullptr)},
      {"negatives_from", to_string(s.negatives_from)},
      {"diversity_weight", s.weights.diversity},
      {"reconstruction_weight", s.weights.reconstruction},
      {"grad_clip", s.grad_clip},
      {"freeze_quantizer", s.freeze_quantizer},
      {"checkpoint_every", s.checkpoint_every},
      {"log_every", s.log_every},
    };
    return j;
  }

  TrainSpec train_spec_from_json(const json& j, TrainSpec s) {
    reject_unknown_keys(j, {"steps", "batch_size", "learning_rate", "warmup_steps", "seed", "freeze_encoder_steps",
                            "negatives_from", "diversity_weight", "reconstruction_weight", "grad_clip",
                            "freeze_quantizer", "checkpoint_every", "log_every"},
                        "train." + to_string(s.mode));
    try {
      auto take = [&](const char* key, auto& field) {
        if (j.contains(key))
          field = j[key].get<std::decay_t<decltype(field)>>();
      };
      take("steps", s.steps);
      take("batch_size", s.batch_size);
      take("learning_rate", s.learning_rate);
      take("warmup_steps", s.warmup_steps);
      take("seed", s.seed);
      if (j.contains("freeze_encoder_steps")) {
        if (j["freeze_encoder_steps"].is_null())
          s.freeze_encoder_steps.reset();
        else
          s.freeze_encoder_steps = j["freeze_encoder_steps"].get<std::int64_t>();
      }
      if (j.contains("negatives_from"))
        s.negatives_from = negative_source_from_string(j["negatives_from"].get<std::string>());
      take("diversity_weight", s.weights.diversity);
      take("reconstruction_weight", s.weights.reconstruction);
      take("grad_clip", s.grad_clip);
      take("freeze_quantizer", s.freeze_quantizer);
      take("checkpoint_every", s.checkpoint_every);
      take("log_every", s.log_every);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "InvalidConfig", "train." + to_string(s.mode) + ": " + e.what());
    }
    s.validate();
    return s;
  }

  // Data

  std::vector<TrainItem> load_training_items(const std::vector<fs::path>& manifests, TrainMode mode,
                                             const ModelConfig& config, bool need_targets) {
    if (manifests.empty())
      fail(ErrorKind::Usage, "MissingData", "no training manifest given");
    std::vector<TrainItem> items;
    for (const auto& path : manifests) {
      const Manifest manifest = load_manifest(path);
      for (const auto& e : manifest.entries) {
        auto entry_error = [&](const char* code, const std::string& msg) {
          fail(ErrorKind::Data, code, "entry '" + e.utterance_id + "' of " + path.string() + ": " + msg);
        };
        TrainItem item;
        item.id = e.utterance_id;
        AudioClip clip = read_wav(e.audio_path);
        validate_clip(clip);
        item.input = std::move(clip.samples);
        const Index frames = config.frames(static_cast<Index>(item.input.size()));
        if (frames < 1)
          entry_error("TooShort", "clip is shorter than the encoder receptive field");
        if (mode == TrainMode::Continual && need_targets) {
          if (!e.clean_path)
            entry_error("MissingCleanTarget", "continual pre-training with reconstruction needs a clean_path");
          AudioClip clean = read_wav(*e.clean_path);
          if (clean.samples.size() != item.input.size())
            entry_error("LengthMismatch", "clean target has " + std::to_string(clean.samples.size())
                        + " samples, noisy input " + std::to_string(item.input.size()));
          item.target = std::move(clean.samples);
        }
        if (mode == TrainMode::Finetune) {
          if (!e.transcript)
            entry_error("MissingTranscript", "fine-tuning needs a transcript");
          item.transcript = normalize_text(*e.transcript);
          item.labels = encode_labels(item.transcript, config.vocab);
          if (ctc_min_frames(item.labels) > frames)
            entry_error("TranscriptTooLong", "transcript needs " + std::to_string(ctc_min_frames(item.labels))
                        + " frames but the clip yields " + std::to_string(frames));
        }
        items.push_back(std::move(item));
      }
    }
    if (items.empty())
      fail(ErrorKind::Data, "EmptyManifest", "training manifests contain no entries");
    return items;
  }

  std::vector<std::vector<Index>> sample_negatives(Index frames, const std::vector<Index>& masked, Index k,
                                                   Rng& rng, NegativeSource source) {
    std::vector<std::vector<Index>> out;
    out.reserve(masked.size());
    std::vector<Index> pool;
    for (Index t : masked) {
      auto build = [&](NegativeSource src) {
        pool.clear();
        if (src == NegativeSource::Masked) {
          for (Index m : masked)
            if (m != t)
              pool.push_back(m);
        } else {
          for (Index m = 0; m < frames; ++m)
            if (m != t)
              pool.push_back(m);
        }
      };
      build(source);
      if (pool.empty() && source == NegativeSource::Masked)
        build(NegativeSource::All);
      if (pool.empty())
        fail(ErrorKind::Data, "EmptyPool", "no other time step to draw negatives from");
      std::vector<Index> draws;
      draws.reserve(static_cast<std::size_t>(k));
      const auto n = static_cast<std::int64_t>(pool.size());
      if (n >= k) {
        for (Index i = 0; i < k; ++i) {
          const auto j = rng.uniform_int(i, n - 1);
          std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
          draws.push_back(pool[static_cast<std::size_t>(i)]);
        }
      } else {
        for (Index i = 0; i < k; ++i)
          draws.push_back(pool[static_cast<std::size_t>(rng.uniform_int(0, n - 1))]);
      }
      out.push_back(std::move(draws));
    }
    return out;
  }

  std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::int64_t batch_size, std::uint64_t seed,
                                         std::int64_t step) {
    if (corpus_size == 0)
      fail(ErrorKind::Data, "EmptyManifest", "no training items");
    const auto n = static_cast<std::int64_t>(corpus_size);
    std::vector<std::size_t> out;
    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> perm;
    for (std::int64_t j = 0; j < batch_size; ++j) {
      const std::int64_t pos = step * batch_size + j;
      const std::int64_t epoch = pos / n;
      if (epoch != cached_epoch) {
        perm.resize(corpus_size);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(derive_seed(seed, "data/epoch", static_cast<std::uint64_t>(epoch)));
        for (std::int64_t i = n - 1; i > 0; --i)
          std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
        cached_epoch = epoch;
      }
      out.push_back(perm[static_cast<std::size_t>(pos % n)]);
    }
    return out;
  }

  json to_json(const StepRecord& r, TrainMode mode) {
    json j = {{"step", r.step}};
    if (mode == TrainMode::Finetune) {
      j["ctc"] = r.ctc;
    } else {
      j["L_c"] = r.losses.contrastive;
      j["L_d"] = r.losses.diversity;
      j["L_r"] = r.losses.reconstruction;
      j["codebook_perplexity"] = r.losses.codebook_perplexity;
      j["contrastive_accuracy"] = r.losses.contrastive_accuracy;
    }
    j["total"] = r.losses.total;
    j["lr"] = r.lr;
    j["grad_norm"] = r.grad_norm;
    j["skipped"] = r.skipped;
    return j;
  }

  // Objectives

  namespace {
    Var sum_vars(const std::vector<Var>& parts) {
      Var acc = parts.front();
      for (std::size_t i = 1; i < parts.size(); ++i)
        acc = ag::add(acc, parts[i]);
      return acc;
    }
  }

  PretrainObjective pretrain_objective(const Model& model, const std::vector<const TrainItem*>& batch,
                                       const TrainSpec& spec, StepRandomness randomness, bool with_reconstruction) {
    const ModelConfig& cfg = model.config();
    const std::uint64_t step_seed = derive_seed(randomness.seed, "step", static_cast<std::uint64_t>(randomness.step));
    const double tau = cfg.gumbel.at(randomness.step);

    std::vector<Var> contrastive_parts, recon_parts, probs;
    Index masked_total = 0, correct = 0, samples_total = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const TrainItem& item = *batch[j];
      const Index frames = cfg.frames(static_cast<Index>(item.input.size()));
      Rng mask_rng(derive_seed(step_seed, "mask", j));
      ForwardOptions opts;
      opts.quantizer = QuantizerMode::StraightThrough;
      opts.gumbel_tau = tau;
      opts.gumbel_seed = derive_seed(step_seed, "gumbel", j);
      opts.mask = plan_masks(frames, cfg.mask_prob, cfg.mask_span, mask_rng);
      opts.run_reconstruction = with_reconstruction;
      const Representations rep = model.forward(item.input, opts);
      probs.push_back(rep.code_probs);

      const std::vector<Index> masked = rep.mask.masked_indices();
      Rng neg_rng(derive_seed(step_seed, "negatives", j));
      std::vector<std::vector<Index>> negatives;
      bool usable = true;
      try {
        negatives = sample_negatives(frames, masked, cfg.num_negatives, neg_rng, spec.negatives_from);
      } catch (const Error& e) {
        if (e.code() != "EmptyPool")
          throw;
        usable = false;
      }
      if (usable) {
        ContrastiveSum cs = contrastive_loss_sum(rep.c, rep.q, masked, negatives, cfg.contrastive_temperature);
        contrastive_parts.push_back(cs.sum);
        masked_total += static_cast<Index>(masked.size());
        correct += cs.correct;
      }
      if (with_reconstruction) {
        const std::vector<double>& target = item.target ? *item.target : item.input;
        const Tensor y(static_cast<Index>(target.size()), 1, target);
        recon_parts.push_back(ag::scale(reconstruction_loss(rep.y_hat, y), static_cast<double>(target.size())));
        samples_total += static_cast<Index>(target.size());
      }
    }

    PretrainObjective out;
    if (masked_total == 0)
      return out;
    out.contrastive = ag::scale(sum_vars(contrastive_parts), 1.0 / static_cast<double>(masked_total));
    const Var all_probs = ag::concat_rows(probs);
    out.diversity = diversity_loss_from_probs(all_probs, cfg.quantizer_groups);
    if (with_reconstruction)
      out.reconstruction = ag::scale(sum_vars(recon_parts), 1.0 / static_cast<double>(samples_total));
    out.total = total_loss(out.contrastive, out.diversity, out.reconstruction, spec.weights);

    LossBreakdown& b = out.breakdown;
    b.contrastive = out.contrastive.item();
    b.diversity = out.diversity.item();
    b.reconstruction = with_reconstruction ? out.reconstruction.item() : 0.0;
    b.total = out.total.item();
    b.contrastive_accuracy = static_cast<double>(correct) / static_cast<double>(masked_total);
    b.codebook_perplexity = codebook_perplexity(average_usage(all_probs.value(), cfg.quantizer_groups));
    return out;
  }

  Var finetune_objective(const Model& model, const std::vector<const TrainItem*>& batch) {
    std::vector<Var> parts;
    for (const TrainItem* item : batch) {
      ForwardOptions opts;
      opts.run_quantizer = false;
      const Representations rep = model.forward(item->input, opts);
      Var loss = ctc_loss(model.ctc_log_probs(rep.c), item->labels);
      if (std::isfinite(loss.item()))
        parts.push_back(loss);
    }
    if (parts.empty())
      return Var();
    return ag::scale(sum_vars(parts), 1.0 / static_cast<double>(parts.size()));
  }

  // Trainer

  Trainer::Trainer(TrainSpec spec, Model model, std::vector<TrainItem> items, std::int64_t start_step)
    : _spec(std::move(spec)), _model(std::move(model)), _items(std::move(items)), _step(start_step) {
    _spec.validate();
    if (_items.empty())
      fail(ErrorKind::Data, "EmptyManifest", "no training items");
  }

  StepRecord Trainer::step() {
    ParameterStore& params = _model.params();
    params.set_trainable("", true);
    if (_spec.mode == TrainMode::Finetune) {
      const bool frozen = !_spec.freeze_encoder_steps || _step < *_spec.freeze_encoder_steps;
      params.set_trainable("encoder.", !frozen);
    } else if (_spec.freeze_quantizer) {
      params.set_trainable("quantizer.", false);
    }
    params.zero_grad();

    std::vector<const TrainItem*> batch;
    for (std::size_t i : batch_indices(_items.size(), _spec.batch_size, _spec.seed, _step))
      batch.push_back(&_items[i]);

    StepRecord rec;
    rec.step = _step + 1;
    rec.lr = learning_rate_at(_step, _spec.learning_rate, _spec.warmup_steps);

    Var total;
    if (_spec.mode == TrainMode::Finetune) {
      total = finetune_objective(_model, batch);
      if (total.defined()) {
        rec.ctc = total.item();
        rec.losses.total = rec.ctc;
      }
    } else {
      const bool recon = _model.has_reconstruction() && _spec.weights.reconstruction > 0.0;
      PretrainObjective obj = pretrain_objective(_model, batch, _spec, {_spec.seed, _step}, recon);
      total = obj.total;
      rec.losses = obj.breakdown;
    }

    if (!total.defined()) {
      rec.skipped = true;
      ++_step;
      return rec;
    }
    if (!std::isfinite(total.item()))
      fail(ErrorKind::Numeric, "NonFiniteLoss", "loss is " + std::to_string(total.item()) + " at step "
           + std::to_string(rec.step));
    ag::backward(total);
    rec.grad_norm = clip_grad_norm(params, _spec.grad_clip);
    if (!std::isfinite(rec.grad_norm))
      fail(ErrorKind::Numeric, "NonFiniteLoss", "gradient norm is not finite at step " + std::to_string(rec.step));
    _adam.step(params, rec.lr);
    params.zero_grad();
    ++_step;
    return rec;
  }

  Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt = checkpoint_from_model(_model);
    ckpt.adam_m = _adam.first_moments();
    ckpt.adam_v = _adam.second_moments();
    ckpt.adam_steps = _adam.steps_taken();
    ckpt.step = _step;
    ckpt.meta = {{"mode", to_string(_spec.mode)}, {"seed", _spec.seed}, {"train", to_json(_spec)}};
    return ckpt;
  }

  void Trainer::restore(const Checkpoint& ckpt) {
    _model = model_from_checkpoint(ckpt);
    _adam.first_moments() = ckpt.adam_m;
    _adam.second_moments() = ckpt.adam_v;
    _adam.set_steps_taken(ckpt.adam_steps);
    _adam.prune(_model.params());
    _step = ckpt.step;
  }

  std::map<std::string, double> reconstruction_gradient_norms(const Model& model, const TrainItem& item,
                                                              const TrainSpec& spec) {
    Model m = model.clone();
    m.params().set_trainable("", true);
    m.params().zero_grad();
    PretrainObjective obj = pretrain_objective(m, {&item}, spec, {spec.seed, 0}, true);
    if (!obj.reconstruction.defined())
      fail(ErrorKind::Internal, "NoReconstruction", "objective has no reconstruction term");
    ag::backward(obj.reconstruction);
    std::map<std::string, double> out;
    for (const auto& [name, p] : m.params().items()) {
      double mx = 0.0;
      for (double g : p.grad().storage())
        mx = std::max(mx, std::abs(g));
      out[name] = mx;
    }
    return out;
  }

  // Full runs

  namespace {
    bool core_name(const std::string& name) {
      return !name.starts_with("recon.") && !name.starts_with("ctc.");
    }

    bool module_matches(const Checkpoint& ckpt, const ParameterStore& fresh, const std::string& prefix) {
      bool any = false;
      for (const auto& [name, v] : fresh.items()) {
        if (!name.starts_with(prefix))
          continue;
        any = true;
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end() || !it->second.same_shape(v.value()))
          return false;
      }
      for (const auto& [name, _] : ckpt.params)
        if (name.starts_with(prefix) && !fresh.contains(name))
          return false;
      return any;
    }

    // Builds the model for this run from `config`, copying every compatible
    // checkpoint tensor. Core parameters must all match.
    Model assemble_model(const ModelConfig& config, const Checkpoint& ckpt, ModelParts parts, std::uint64_t seed,
                         const std::function<void(const std::string&)>& log) {
      Model model(config, seed, parts);
      ParameterStore& store = model.params();
      std::vector<std::string> problems;
      for (const auto& [name, v] : store.items()) {
        if (!core_name(name))
          continue;
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end())
          problems.push_back(name + ": missing from checkpoint");
        else if (!it->second.same_shape(v.value()))
          problems.push_back(name + ": checkpoint " + it->second.shape_string() + " vs model " + v.value().shape_string());
      }
      for (const auto& [name, _] : ckpt.params)
        if (core_name(name) && !store.contains(name))
          problems.push_back(name + ": not part of the configured model");
      if (!problems.empty()) {
        std::ostringstream msg;
        msg << "checkpoint does not match the model configuration:";
        for (const auto& p : problems)
          msg << "\n  " << p;
        fail(ErrorKind::Data, "ConfigMismatch", msg.str());
      }
      for (const std::string prefix : {"recon.", "ctc."}) {
        const bool wanted = prefix == "recon." ? parts.reconstruction : parts.ctc_head;
        if (!wanted)
          continue;
        if (module_matches(ckpt, store, prefix)) {
          for (const auto& [name, t] : ckpt.params)
            if (name.starts_with(prefix))
              store.add(name, t);
        } else if (log) {
          log("initializing " + prefix.substr(0, prefix.size() - 1) + " parameters fresh");
        }
      }
      for (const auto& [name, t] : ckpt.params)
        if (core_name(name))
          store.add(name, t);
      return model;
    }

    void write_metrics(const fs::path& path, const std::vector<json>& kept) {
      std::ofstream os(path, std::ios::trunc);
      if (!os)
        fail(ErrorKind::Io, "IoError", "cannot write " + path.string());
      for (const auto& j : kept)
        os << j.dump() << '\n';
    }

    std::vector<json> read_metrics_until(const fs::path& path, std::int64_t step) {
      std::vector<json> kept;
      std::ifstream is(path);
      for (std::string line; std::getline(is, line);) {
        if (line.empty())
          continue;
        try {
          json j = json::parse(line);
          if (j.value("step", std::int64_t{0}) <= step)
            kept.push_back(std::move(j));
        } catch (const json::exception&) {
        }
      }
      return kept;
    }
  }

  TrainResult train(const TrainSpec& spec, const ModelConfig& config, const TrainHooks& hooks) {
    spec.validate();
    config.validate();
    auto log = [&](const std::string& msg) {
      if (hooks.log)
        hooks.log(msg);
    };

    const bool want_recon = spec.mode == TrainMode::Continual && spec.weights.reconstruction > 0.0;
    const ModelParts parts{want_recon, spec.mode == TrainMode::Finetune};
    const std::uint64_t init_seed = derive_seed(spec.seed, "init");

    std::optional<Checkpoint> ckpt;
    if (spec.init_checkpoint)
      ckpt = load_checkpoint(*spec.init_checkpoint);
    else if (spec.mode != TrainMode::Pretrain)
      fail(ErrorKind::Usage, "MissingCheckpoint", to_string(spec.mode) + " needs an initial checkpoint");

    const bool resume = ckpt && ckpt->meta.value("mode", std::string()) == to_string(spec.mode);
    Model model = ckpt ? assemble_model(config, *ckpt, parts, init_seed, log) : Model(config, init_seed, parts);

    std::vector<TrainItem> items = load_training_items(spec.data, spec.mode, config, want_recon);
    log(to_string(spec.mode) + ": " + std::to_string(items.size()) + " items, "
        + std::to_string(model.params().total_size()) + " parameters");

    Trainer trainer(spec, std::move(model), std::move(items));
    if (resume) {
      Checkpoint state = checkpoint_from_model(trainer.model());
      state.adam_m = ckpt->adam_m;
      state.adam_v = ckpt->adam_v;
      state.adam_steps = ckpt->adam_steps;
      state.step = ckpt->step;
      trainer.restore(state);
      log("resuming at step " + std::to_string(ckpt->step));
    }

    const bool write = !spec.out_dir.empty();
    fs::path metrics_path;
    if (write) {
      fs::create_directories(spec.out_dir);
      metrics_path = spec.out_dir / "metrics.jsonl";
      write_metrics(metrics_path, resume ? read_metrics_until(metrics_path, trainer.current_step()) : std::vector<json>{});
    }

    TrainResult result;
    try {
      std::ofstream metrics;
      if (write)
        metrics.open(metrics_path, std::ios::app);
      while (trainer.current_step() < spec.steps) {
        StepRecord rec = trainer.step();
        if (rec.skipped) {
          ++result.skipped_steps;
          log("step " + std::to_string(rec.step) + " skipped: no usable negatives");
        }
        if (write)
          metrics << to_json(rec, spec.mode).dump() << '\n' << std::flush;
        if (hooks.on_step)
          hooks.on_step(rec);
        if (spec.log_every > 0 && (rec.step % spec.log_every == 0 || rec.step == spec.steps)) {
          std::ostringstream msg;
          msg << to_string(spec.mode) << " step " << rec.step << " total " << rec.losses.total;
          log(msg.str());
        }
        result.history.push_back(std::move(rec));
        if (write && spec.checkpoint_every > 0 && trainer.current_step() % spec.checkpoint_every == 0
            && trainer.current_step() < spec.steps)
          save_checkpoint(trainer.checkpoint(),
                          spec.out_dir / ("checkpoint_" + std::to_string(trainer.current_step()) + ".ckpt"));
      }
    } catch (const Error& e) {
      if (write && e.kind() == ErrorKind::Numeric) {
        json diag = {{"error", e.code()}, {"message", e.what()}, {"step", trainer.current_step() + 1}};
        json recent = json::array();
        const std::size_t from = result.history.size() > 10 ? result.history.size() - 10 : 0;
        for (std::size_t i = from; i < result.history.size(); ++i)
          recent.push_back(to_json(result.history[i], spec.mode));
        diag["recent_steps"] = recent;
        std::ofstream(spec.out_dir / "diagnostics.json") << diag.dump(2) << '\n';
      }
      throw;
    }

    if (write) {
      const fs::path final_path = spec.out_dir / "final.ckpt";
      save_checkpoint(trainer.checkpoint(), final_path);
      result.final_checkpoint = final_path;
    }
    result.model = trainer.model().clone();
    return result;
  }

}
