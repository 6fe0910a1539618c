#include "rssl/rssl.h"

#include <cstring>
#include <string>
#include <vector>

#include "app/commands.h"
#include "core/error.h"
#include "data/synthesis.h"
#include "eval/wer.h"

struct rssl_context {
  std::string error;
  std::string code;
  rssl_log_fn log = nullptr;
  void* log_user = nullptr;
};

struct rssl_config {
  rssl::RunConfig value;
};

namespace {

  rssl_status status_of(rssl::ErrorKind kind) {
    switch (kind) {
    case rssl::ErrorKind::Usage: return RSSL_ERR_USAGE;
    case rssl::ErrorKind::Config: return RSSL_ERR_CONFIG;
    case rssl::ErrorKind::Io: return RSSL_ERR_IO;
    case rssl::ErrorKind::Data: return RSSL_ERR_DATA;
    case rssl::ErrorKind::Numeric: return RSSL_ERR_NUMERIC;
    case rssl::ErrorKind::Internal: return RSSL_ERR_INTERNAL;
    }
    return RSSL_ERR_INTERNAL;
  }

  rssl::LogFn logger(rssl_context* ctx) {
    if (!ctx->log)
      return {};
    return [ctx](const std::string& msg) { ctx->log(msg.c_str(), ctx->log_user); };
  }

  template <class F>
  rssl_status guarded(rssl_context* ctx, F&& body) {
    if (!ctx)
      return RSSL_ERR_USAGE;
    ctx->error.clear();
    ctx->code.clear();
    try {
      body();
      return RSSL_OK;
    } catch (const rssl::Error& e) {
      ctx->error = e.what();
      ctx->code = e.code();
      return status_of(e.kind());
    } catch (const std::bad_alloc&) {
      ctx->error = "out of memory";
      ctx->code = "OutOfMemory";
    } catch (const std::exception& e) {
      ctx->error = e.what();
      ctx->code = "InternalError";
    }
    return RSSL_ERR_INTERNAL;
  }

  void need(const void* p, const char* name) {
    if (!p)
      rssl::fail(rssl::ErrorKind::Usage, "NullArgument", std::string(name) + " must not be NULL");
  }

  std::vector<std::filesystem::path> paths(const char* const* items, size_t n) {
    if (n > 0)
      need(items, "manifests");
    std::vector<std::filesystem::path> out;
    for (size_t i = 0; i < n; ++i) {
      need(items[i], "manifest path");
      out.emplace_back(items[i]);
    }
    return out;
  }

}

extern "C" {

const char* rssl_version(void) {
  return "0.1.0";
}

int rssl_exit_code(rssl_status status) {
  switch (status) {
  case RSSL_OK: return 0;
  case RSSL_ERR_USAGE:
  case RSSL_ERR_CONFIG: return 1;
  case RSSL_ERR_IO:
  case RSSL_ERR_DATA: return 2;
  case RSSL_ERR_NUMERIC: return 3;
  case RSSL_ERR_INTERNAL: return 2;
  }
  return 2;
}

rssl_context* rssl_context_new(void) {
  return new (std::nothrow) rssl_context();
}

void rssl_context_free(rssl_context* ctx) {
  delete ctx;
}

const char* rssl_last_error(const rssl_context* ctx) {
  return ctx ? ctx->error.c_str() : "null context";
}

const char* rssl_last_error_code(const rssl_context* ctx) {
  return ctx ? ctx->code.c_str() : "NullArgument";
}

void rssl_set_log_callback(rssl_context* ctx, rssl_log_fn fn, void* user_data) {
  if (!ctx)
    return;
  ctx->log = fn;
  ctx->log_user = user_data;
}

rssl_status rssl_config_default(rssl_context* ctx, rssl_config** out) {
  return guarded(ctx, [&] {
    need(out, "out");
    *out = new rssl_config();
  });
}

rssl_status rssl_config_load(rssl_context* ctx, const char* path, rssl_config** out) {
  return guarded(ctx, [&] {
    need(path, "path");
    need(out, "out");
    *out = new rssl_config{rssl::load_run_config(path)};
  });
}

rssl_status rssl_config_patch(rssl_context* ctx, rssl_config* config, const char* json_patch) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(json_patch, "json_patch");
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(json_patch);
    } catch (const nlohmann::json::exception& e) {
      rssl::fail(rssl::ErrorKind::Config, "InvalidConfig", std::string("override: ") + e.what());
    }
    config->value = rssl::apply_overrides(config->value, patch);
  });
}

rssl_status rssl_config_to_json(rssl_context* ctx, const rssl_config* config, char** out) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(out, "out");
    const std::string text = rssl::to_json(config->value).dump(2);
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void rssl_config_free(rssl_config* config) {
  delete config;
}

void rssl_string_free(char* s) {
  delete[] s;
}

rssl_status rssl_make_toy_corpus(rssl_context* ctx, const char* out_dir, uint64_t seed, int n_utts, int n_noise) {
  return guarded(ctx, [&] {
    need(out_dir, "out_dir");
    rssl::cmd_make_toy_corpus(out_dir, seed, n_utts, n_noise);
  });
}

rssl_status rssl_mix(rssl_context* ctx, const char* clean_manifest, const char* noise_manifest, const char* out_dir,
                     uint64_t seed, int snr_min, int snr_max) {
  return guarded(ctx, [&] {
    need(clean_manifest, "clean_manifest");
    need(noise_manifest, "noise_manifest");
    need(out_dir, "out_dir");
    if (snr_min > snr_max)
      rssl::fail(rssl::ErrorKind::Usage, "InvalidArgument", "snr_min exceeds snr_max");
    rssl::CorpusBuildOptions options;
    options.seed = seed;
    options.snr_min = snr_min;
    options.snr_max = snr_max;
    rssl::cmd_mix(clean_manifest, noise_manifest, out_dir, options, logger(ctx));
  });
}

rssl_status rssl_train(rssl_context* ctx, const rssl_config* config, const char* mode, const char* const* manifests,
                       size_t n_manifests, const char* init_checkpoint, const char* out_dir) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(mode, "mode");
    need(out_dir, "out_dir");
    rssl::TrainMode m;
    try {
      m = rssl::train_mode_from_string(mode);
    } catch (const rssl::Error& e) {
      rssl::fail(rssl::ErrorKind::Usage, e.code(), std::string("unknown training mode '") + mode + "'");
    }
    std::optional<std::filesystem::path> init;
    if (init_checkpoint)
      init = init_checkpoint;
    rssl::cmd_train(config->value, m, paths(manifests, n_manifests), init, out_dir, logger(ctx));
  });
}

rssl_status rssl_evaluate(rssl_context* ctx, const rssl_config* config, const char* checkpoint, const char* manifest,
                          const char* results_path, double* wer_out) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(checkpoint, "checkpoint");
    need(manifest, "manifest");
    need(results_path, "results_path");
    const auto r = rssl::cmd_evaluate(config->value, checkpoint, manifest, results_path, logger(ctx));
    if (wer_out)
      *wer_out = r.corpus_wer();
  });
}

rssl_status rssl_build_lm(rssl_context* ctx, const rssl_config* config, const char* const* manifests,
                          size_t n_manifests, const char* out_path) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(out_path, "out_path");
    const auto& c = config->value;
    rssl::cmd_build_lm(paths(manifests, n_manifests), c.model.vocab, c.decode.lm_order, c.decode.lm_add_k, out_path);
  });
}

rssl_status rssl_ablate(rssl_context* ctx, const rssl_config* config, const char* init_checkpoint,
                        const char* const* manifests, size_t n_manifests, const char* eval_manifest,
                        const char* out_dir) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(init_checkpoint, "init_checkpoint");
    need(eval_manifest, "eval_manifest");
    need(out_dir, "out_dir");
    rssl::cmd_ablate(config->value, init_checkpoint, paths(manifests, n_manifests), eval_manifest, out_dir,
                     logger(ctx));
  });
}

rssl_status rssl_plot(rssl_context* ctx, const char* metrics_log, const char* ablation_report, const char* out_dir) {
  return guarded(ctx, [&] {
    need(out_dir, "out_dir");
    std::optional<std::filesystem::path> log, report;
    if (metrics_log)
      log = metrics_log;
    if (ablation_report)
      report = ablation_report;
    rssl::cmd_plot(log, report, out_dir, logger(ctx));
  });
}

rssl_status rssl_pipeline(rssl_context* ctx, const rssl_config* config, const char* out_dir, const char* stage) {
  return guarded(ctx, [&] {
    need(config, "config");
    need(out_dir, "out_dir");
    std::optional<std::string> s;
    if (stage)
      s = stage;
    rssl::cmd_pipeline(config->value, out_dir, s, logger(ctx));
  });
}

rssl_status rssl_mix_at_snr(rssl_context* ctx, const double* clean, size_t n_clean, const double* noise,
                            size_t n_noise, int sample_rate, double snr_db, uint64_t seed, double* noisy_out,
                            double* clean_out, double* measured_snr_db) {
  return guarded(ctx, [&] {
    need(clean, "clean");
    need(noise, "noise");
    need(noisy_out, "noisy_out");
    need(clean_out, "clean_out");
    rssl::AudioClip c{std::vector<double>(clean, clean + n_clean), sample_rate, "clean"};
    rssl::AudioClip n{std::vector<double>(noise, noise + n_noise), sample_rate, "noise"};
    const rssl::NoisyPair pair = rssl::mix_at_snr(c, n, snr_db, seed);
    std::copy(pair.noisy.samples.begin(), pair.noisy.samples.end(), noisy_out);
    std::copy(pair.clean.samples.begin(), pair.clean.samples.end(), clean_out);
    if (measured_snr_db)
      *measured_snr_db = rssl::measured_snr_db(pair);
  });
}

rssl_status rssl_wer(rssl_context* ctx, const char* reference, const char* hypothesis, double* wer_out) {
  return guarded(ctx, [&] {
    need(reference, "reference");
    need(hypothesis, "hypothesis");
    need(wer_out, "wer_out");
    *wer_out = rssl::wer(hypothesis, reference);
  });
}

}
