#ifndef RSSL_RSSL_H
#define RSSL_RSSL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RSSL_BUILDING)
#    define RSSL_API __declspec(dllexport)
#  else
#    define RSSL_API __declspec(dllimport)
#  endif
#else
#  define RSSL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rssl_status {
  RSSL_OK = 0,
  RSSL_ERR_USAGE = 1,
  RSSL_ERR_CONFIG = 2,
  RSSL_ERR_IO = 3,
  RSSL_ERR_DATA = 4,
  RSSL_ERR_NUMERIC = 5,
  RSSL_ERR_INTERNAL = 6
} rssl_status;

typedef struct rssl_context rssl_context;
typedef struct rssl_config rssl_config;

typedef void (*rssl_log_fn)(const char* message, void* user_data);

RSSL_API const char* rssl_version(void);

/* Process exit code for a status: 0 ok, 1 usage/config, 2 data/io/internal, 3 numeric. */
RSSL_API int rssl_exit_code(rssl_status status);

RSSL_API rssl_context* rssl_context_new(void);
RSSL_API void rssl_context_free(rssl_context* ctx);
/* Valid until the next call on the same context. Empty when the last call succeeded. */
RSSL_API const char* rssl_last_error(const rssl_context* ctx);
/* Short tag such as "MissingCheckpoint". */
RSSL_API const char* rssl_last_error_code(const rssl_context* ctx);
RSSL_API void rssl_set_log_callback(rssl_context* ctx, rssl_log_fn fn, void* user_data);

RSSL_API rssl_status rssl_config_default(rssl_context* ctx, rssl_config** out);
RSSL_API rssl_status rssl_config_load(rssl_context* ctx, const char* path, rssl_config** out);
/* JSON merge patch over the current values; the config is unchanged on error. */
RSSL_API rssl_status rssl_config_patch(rssl_context* ctx, rssl_config* config, const char* json_patch);
/* Caller frees *out with rssl_string_free. */
RSSL_API rssl_status rssl_config_to_json(rssl_context* ctx, const rssl_config* config, char** out);
RSSL_API void rssl_config_free(rssl_config* config);
RSSL_API void rssl_string_free(char* s);

RSSL_API rssl_status rssl_make_toy_corpus(rssl_context* ctx, const char* out_dir, uint64_t seed, int n_utts,
                                          int n_noise);
RSSL_API rssl_status rssl_mix(rssl_context* ctx, const char* clean_manifest, const char* noise_manifest,
                              const char* out_dir, uint64_t seed, int snr_min, int snr_max);

/* mode: "pretrain", "continual" or "finetune". init_checkpoint may be NULL. */
RSSL_API rssl_status rssl_train(rssl_context* ctx, const rssl_config* config, const char* mode,
                                const char* const* manifests, size_t n_manifests, const char* init_checkpoint,
                                const char* out_dir);
/* wer_out may be NULL. */
RSSL_API rssl_status rssl_evaluate(rssl_context* ctx, const rssl_config* config, const char* checkpoint,
                                   const char* manifest, const char* results_path, double* wer_out);
/* Vocabulary from model.vocab, order and add-k from decode.lm_order / decode.lm_add_k. */
RSSL_API rssl_status rssl_build_lm(rssl_context* ctx, const rssl_config* config, const char* const* manifests,
                                   size_t n_manifests, const char* out_path);
RSSL_API rssl_status rssl_ablate(rssl_context* ctx, const rssl_config* config, const char* init_checkpoint,
                                 const char* const* manifests, size_t n_manifests, const char* eval_manifest,
                                 const char* out_dir);
/* Either input may be NULL, not both. */
RSSL_API rssl_status rssl_plot(rssl_context* ctx, const char* metrics_log, const char* ablation_report,
                               const char* out_dir);
/* stage NULL runs every stage. */
RSSL_API rssl_status rssl_pipeline(rssl_context* ctx, const rssl_config* config, const char* out_dir,
                                   const char* stage);

/* noisy_out and clean_out hold n_clean samples each; measured_snr_db may be NULL. */
RSSL_API rssl_status rssl_mix_at_snr(rssl_context* ctx, const double* clean, size_t n_clean, const double* noise,
                                     size_t n_noise, int sample_rate, double snr_db, uint64_t seed,
                                     double* noisy_out, double* clean_out, double* measured_snr_db);
RSSL_API rssl_status rssl_wer(rssl_context* ctx, const char* reference, const char* hypothesis, double* wer_out);

#ifdef __cplusplus
}
#endif

#endif
