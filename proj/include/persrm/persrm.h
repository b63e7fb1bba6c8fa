#pragma once

#include <stddef.h>

#if defined(_WIN32)
#define PERSRM_API __declspec(dllexport)
#else
#define PERSRM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum persrm_status {
  PERSRM_OK = 0,
  PERSRM_ERR_INTERNAL = 1,
  PERSRM_ERR_CONFIG = 2,
  PERSRM_ERR_DATA = 3,
  PERSRM_ERR_GATEWAY = 4,
  PERSRM_ERR_VERIFICATION = 5
} persrm_status;

typedef struct persrm_context persrm_context;

PERSRM_API const char* persrm_version(void);

/* A context owns a configuration (shipped defaults until changed) plus the last error and
   summary. Not safe for concurrent use; create one per thread. */
PERSRM_API persrm_context* persrm_context_create(void);
PERSRM_API void persrm_context_destroy(persrm_context* ctx);

/* Message of the last failed call, or "" after a success. Owned by the context. */
PERSRM_API const char* persrm_last_error(const persrm_context* ctx);
/* JSON summary of the last successful stage, or "{}". Owned by the context. */
PERSRM_API const char* persrm_last_summary(const persrm_context* ctx);

/* Strings returned through char** out-parameters are released with this. */
PERSRM_API void persrm_string_free(char* s);

/* Configuration layers: file, then environment, then individual overrides. */
PERSRM_API persrm_status persrm_config_load(persrm_context* ctx, const char* path);
PERSRM_API persrm_status persrm_config_apply_env(persrm_context* ctx);
PERSRM_API persrm_status persrm_config_set(persrm_context* ctx, const char* key, const char* value);
/* Resolved configuration as JSON (secrets removed). */
PERSRM_API persrm_status persrm_config_dump(persrm_context* ctx, char** json_out);

/* Pipeline stages. Each writes into out_dir (replacing a previous run's output) together with
   manifest.json; on failure the partial output is left in <out_dir>.quarantine. Optional path
   arguments may be NULL. */
PERSRM_API persrm_status persrm_ingest(persrm_context* ctx, const char* root, const char* manifest_csv,
                                       const char* out_dir);
PERSRM_API persrm_status persrm_split(persrm_context* ctx, const char* corpus, const char* spec,
                                      const char* out_dir);
PERSRM_API persrm_status persrm_verify_split(persrm_context* ctx, const char* corpus, const char* splits,
                                             const char* out_dir);
PERSRM_API persrm_status persrm_augment(persrm_context* ctx, const char* corpus, const char* splits,
                                        const char* out_dir);
PERSRM_API persrm_status persrm_trace(persrm_context* ctx, const char* pairs, const char* corpus, const char* splits,
                                      const char* out_dir);
PERSRM_API persrm_status persrm_filter(persrm_context* ctx, const char* traces, const char* out_dir);
PERSRM_API persrm_status persrm_export_sft(persrm_context* ctx, const char* pairs, const char* traces,
                                           const char* corpus, const char* splits, const char* out_dir);
PERSRM_API persrm_status persrm_export_rft(persrm_context* ctx, const char* pairs, const char* traces,
                                           const char* corpus, const char* splits, const char* out_dir);
PERSRM_API persrm_status persrm_score_rollouts(persrm_context* ctx, const char* rollouts, const char* orders,
                                               const char* out_dir);
PERSRM_API persrm_status persrm_eval(persrm_context* ctx, const char* pairs, const char* corpus, const char* splits,
                                     const char* out_dir);
PERSRM_API persrm_status persrm_judge_quality(persrm_context* ctx, const char* pairs, const char* out_dir);
PERSRM_API persrm_status persrm_report(persrm_context* ctx, const char* dir, char** text_out);

/* Numeric kernels. ctx may be NULL; when given it receives the error message. */
PERSRM_API persrm_status persrm_group_advantages(persrm_context* ctx, const double* rewards, size_t n,
                                                 int sample_std, double* advantages_out);
PERSRM_API persrm_status persrm_token_kl(persrm_context* ctx, double current_logprob, double reference_logprob,
                                         double* kl_out);
/* neg_first: nonzero when the negative response was shown as Response A. */
PERSRM_API persrm_status persrm_rft_reward(persrm_context* ctx, const char* completion, int neg_first,
                                           int* reward_out);

#ifdef __cplusplus
}
#endif
