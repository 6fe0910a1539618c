// Command-line front end; talks to the library only through the C API.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rssl/rssl.h"

namespace {

  using nlohmann::json;

  struct Context {
    rssl_context* ctx = rssl_context_new();
    ~Context() { rssl_context_free(ctx); }
  };

  struct Config {
    rssl_config* cfg = nullptr;
    ~Config() { rssl_config_free(cfg); }
  };

  void print_log(const char* message, void* quiet) {
    if (!*static_cast<bool*>(quiet))
      std::fprintf(stderr, "[rssl] %s\n", message);
  }

  int report(rssl_context* ctx, rssl_status st) {
    if (st != RSSL_OK)
      std::fprintf(stderr, "error: %s\n", rssl_last_error(ctx));
    return rssl_exit_code(st);
  }

  // Shared flags of every command that reads a run configuration.
  struct ConfigFlags {
    std::string path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* cmd) {
      cmd->add_option("--config", path, "JSON run configuration (defaults when omitted)");
      cmd->add_option("--set", sets, "override as dotted.key=JSON, e.g. train.pretrain.steps=50")
        ->check([](const std::string& s) {
          const auto eq = s.find('=');
          return eq == std::string::npos || eq == 0 ? std::string("expected key=value") : std::string();
        });
      cmd->add_option("--seed", seed, "seed for every stage this command runs");
    }
  };

  json dotted_patch(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded())
      value = raw;
    json patch = json::object();
    json* node = &patch;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
    return patch;
  }

  // Loads the file (or defaults), then applies seeds and --set overrides in
  // that order, so explicit --set values win.
  rssl_status build_config(rssl_context* ctx, const ConfigFlags& flags, const std::vector<std::string>& seed_keys,
                           const json& extra, Config& out) {
    rssl_status st = flags.path.empty() ? rssl_config_default(ctx, &out.cfg)
                                        : rssl_config_load(ctx, flags.path.c_str(), &out.cfg);
    if (st != RSSL_OK)
      return st;
    json patch = json::object();
    if (flags.seed)
      for (const auto& key : seed_keys)
        patch.merge_patch(dotted_patch(key + "=" + std::to_string(*flags.seed)));
    patch.merge_patch(extra);
    for (const auto& s : flags.sets)
      patch.merge_patch(dotted_patch(s));
    if (patch.empty())
      return RSSL_OK;
    const std::string text = patch.dump();
    return rssl_config_patch(ctx, out.cfg, text.c_str());
  }

  std::vector<const char*> c_strings(const std::vector<std::string>& v) {
    std::vector<const char*> out;
    for (const auto& s : v)
      out.push_back(s.c_str());
    return out;
  }

  const std::vector<std::string> kAllSeeds{"corpus.seed", "train.pretrain.seed", "train.continual.seed",
                                           "train.finetune.seed"};

}

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust self-supervised speech pretraining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rssl_version());
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  Context context;
  rssl_context* ctx = context.ctx;
  rssl_set_log_callback(ctx, print_log, &quiet);
  int exit_code = 0;

  // make-toy-corpus
  auto* toy = app.add_subcommand("make-toy-corpus", "synthesize a seeded toy speech and noise corpus");
  std::string toy_out;
  std::uint64_t toy_seed = 7;
  int toy_utts = 12, toy_noise = 4;
  toy->add_option("--out", toy_out, "output directory")->required();
  toy->add_option("--seed", toy_seed, "corpus seed");
  toy->add_option("--n-utts", toy_utts, "number of speech clips");
  toy->add_option("--n-noise", toy_noise, "number of noise clips");
  toy->callback([&] { exit_code = report(ctx, rssl_make_toy_corpus(ctx, toy_out.c_str(), toy_seed, toy_utts, toy_noise)); });

  // mix
  auto* mix = app.add_subcommand("mix", "mix clean speech with noise at random SNRs");
  std::string mix_clean, mix_noise, mix_out;
  std::uint64_t mix_seed = 0;
  int snr_min = 5, snr_max = 20;
  mix->add_option("--clean-manifest", mix_clean, "clean speech manifest")->required();
  mix->add_option("--noise-manifest", mix_noise, "noise manifest")->required();
  mix->add_option("--out", mix_out, "output directory")->required();
  mix->add_option("--seed", mix_seed, "mixing seed");
  mix->add_option("--snr-min", snr_min, "lowest SNR in dB");
  mix->add_option("--snr-max", snr_max, "highest SNR in dB");
  mix->callback([&] {
    exit_code = report(ctx, rssl_mix(ctx, mix_clean.c_str(), mix_noise.c_str(), mix_out.c_str(), mix_seed, snr_min, snr_max));
  });

  // pretrain / continue / finetune
  struct TrainCmd {
    const char* name;
    const char* mode;
    const char* help;
    ConfigFlags flags;
    std::vector<std::string> data;
    std::string init, out;
    std::optional<long> steps;
    std::optional<double> lr;
    std::string negatives;
  };
  std::vector<TrainCmd> train_cmds{
    {"pretrain", "pretrain", "self-supervised pretraining from scratch", {}, {}, {}, {}, {}, {}, {}},
    {"continue", "continual", "continual pretraining with the reconstruction loss", {}, {}, {}, {}, {}, {}, {}},
    {"finetune", "finetune", "CTC fine-tuning", {}, {}, {}, {}, {}, {}, {}},
  };
  for (auto& tc : train_cmds) {
    auto* cmd = app.add_subcommand(tc.name, tc.help);
    tc.flags.add(cmd);
    cmd->add_option("--data", tc.data, "training manifest(s)")->required();
    cmd->add_option("--init", tc.init, "initial checkpoint");
    cmd->add_option("--out", tc.out, "output directory")->required();
    cmd->add_option("--steps", tc.steps, "optimizer steps");
    cmd->add_option("--lr", tc.lr, "peak learning rate");
    cmd->add_option("--negatives-from", tc.negatives, "distractor pool")->check(CLI::IsMember({"all", "masked"}));
    cmd->callback([&, &tc = tc] {
      const std::string section = std::string("train.") + tc.mode;
      json extra = json::object();
      if (tc.steps)
        extra["train"][tc.mode]["steps"] = *tc.steps;
      if (tc.lr)
        extra["train"][tc.mode]["learning_rate"] = *tc.lr;
      if (!tc.negatives.empty())
        extra["train"][tc.mode]["negatives_from"] = tc.negatives;
      Config cfg;
      rssl_status st = build_config(ctx, tc.flags, {section + ".seed"}, extra, cfg);
      if (st == RSSL_OK) {
        const auto data = c_strings(tc.data);
        st = rssl_train(ctx, cfg.cfg, tc.mode, data.data(), data.size(), tc.init.empty() ? nullptr : tc.init.c_str(),
                        tc.out.c_str());
      }
      exit_code = report(ctx, st);
    });
  }

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "decode a manifest and score WER");
  ConfigFlags ev_flags;
  std::string ev_ckpt, ev_manifest, ev_out, ev_lm, ev_mode;
  std::optional<double> ev_lm_weight, ev_penalty;
  std::optional<long> ev_beam;
  ev_flags.add(ev);
  ev->add_option("--ckpt,--checkpoint", ev_ckpt, "fine-tuned checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "manifest with transcripts")->required();
  ev->add_option("--out", ev_out, "results file (JSON lines)")->required();
  ev->add_option("--decode", ev_mode, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
  ev->add_option("--beam,--beam-size", ev_beam, "beam width (implies --decode beam)");
  ev->add_option("--lm", ev_lm, "character LM file, or 'none'");
  ev->add_option("--lm-weight", ev_lm_weight, "LM weight");
  ev->add_option("--ins-penalty,--insertion-penalty", ev_penalty, "per-label insertion bonus");
  ev->callback([&] {
    json extra = json::object();
    if (!ev_mode.empty())
      extra["decode"]["mode"] = ev_mode;
    if (ev_beam) {
      extra["decode"]["beam_size"] = *ev_beam;
      if (ev_mode.empty())
        extra["decode"]["mode"] = "beam";
    }
    if (!ev_lm.empty())
      extra["decode"]["lm"] = ev_lm;
    if (ev_lm_weight)
      extra["decode"]["lm_weight"] = *ev_lm_weight;
    if (ev_penalty)
      extra["decode"]["insertion_penalty"] = *ev_penalty;
    Config cfg;
    rssl_status st = build_config(ctx, ev_flags, {}, extra, cfg);
    double wer = 0.0;
    if (st == RSSL_OK)
      st = rssl_evaluate(ctx, cfg.cfg, ev_ckpt.c_str(), ev_manifest.c_str(), ev_out.c_str(), &wer);
    if (st == RSSL_OK)
      std::printf("WER %.2f%%\n", 100.0 * wer);
    exit_code = report(ctx, st);
  });

  // build-lm
  auto* blm = app.add_subcommand("build-lm", "train a character n-gram LM on manifest transcripts");
  ConfigFlags blm_flags;
  std::vector<std::string> blm_data;
  std::string blm_out;
  std::optional<int> blm_order;
  std::optional<double> blm_k;
  blm_flags.add(blm);
  blm->add_option("--data", blm_data, "manifest(s) with transcripts")->required();
  blm->add_option("--out", blm_out, "LM file")->required();
  blm->add_option("--order", blm_order, "n-gram order");
  blm->add_option("--add-k", blm_k, "additive smoothing constant");
  blm->callback([&] {
    json extra = json::object();
    if (blm_order)
      extra["decode"]["lm_order"] = *blm_order;
    if (blm_k)
      extra["decode"]["lm_add_k"] = *blm_k;
    Config cfg;
    rssl_status st = build_config(ctx, blm_flags, {}, extra, cfg);
    if (st == RSSL_OK) {
      const auto data = c_strings(blm_data);
      st = rssl_build_lm(ctx, cfg.cfg, data.data(), data.size(), blm_out.c_str());
    }
    exit_code = report(ctx, st);
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "reconstruction attachment/bottleneck ablation");
  ConfigFlags ab_flags;
  std::vector<std::string> ab_data;
  std::string ab_init, ab_eval, ab_out;
  ab_flags.add(ab);
  ab->add_option("--init", ab_init, "pretrained checkpoint shared by every cell")->required();
  ab->add_option("--data", ab_data, "noisy training manifest(s) with clean targets")->required();
  ab->add_option("--eval-manifest", ab_eval, "evaluation manifest")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->callback([&] {
    Config cfg;
    rssl_status st = build_config(ctx, ab_flags, {"train.continual.seed", "train.finetune.seed"}, json::object(), cfg);
    if (st == RSSL_OK) {
      const auto data = c_strings(ab_data);
      st = rssl_ablate(ctx, cfg.cfg, ab_init.c_str(), data.data(), data.size(), ab_eval.c_str(), ab_out.c_str());
    }
    exit_code = report(ctx, st);
  });

  // plot
  auto* pl = app.add_subcommand("plot", "loss curves and ablation table as files");
  std::string pl_log, pl_ablation, pl_out;
  pl->add_option("--log", pl_log, "metrics.jsonl from a training run");
  pl->add_option("--ablation", pl_ablation, "ablation.json from the ablate command");
  pl->add_option("--out", pl_out, "output directory")->required();
  pl->callback([&] {
    exit_code = report(ctx, rssl_plot(ctx, pl_log.empty() ? nullptr : pl_log.c_str(),
                                      pl_ablation.empty() ? nullptr : pl_ablation.c_str(), pl_out.c_str()));
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "corpus -> mix -> pretrain -> continual -> finetune -> evaluate");
  ConfigFlags pipe_flags;
  std::string pipe_out, pipe_stage;
  pipe_flags.add(pipe);
  pipe->add_option("--out", pipe_out, "output directory")->required();
  pipe->add_option("--stage", pipe_stage, "run only this stage");
  pipe->callback([&] {
    Config cfg;
    rssl_status st = build_config(ctx, pipe_flags, kAllSeeds, json::object(), cfg);
    if (st == RSSL_OK)
      st = rssl_pipeline(ctx, cfg.cfg, pipe_out.c_str(), pipe_stage.empty() ? nullptr : pipe_stage.c_str());
    exit_code = report(ctx, st);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return exit_code;
}
