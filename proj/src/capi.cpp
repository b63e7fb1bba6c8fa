#include "persrm/persrm.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <span>

#include "pipeline.hpp"

struct persrm_context {
  persrm::Config config;
  std::string last_error;
  std::string last_summary = "{}";
};

namespace {

using persrm::ErrorKind;

persrm_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return PERSRM_ERR_CONFIG;
    case ErrorKind::data: return PERSRM_ERR_DATA;
    case ErrorKind::gateway: return PERSRM_ERR_GATEWAY;
    case ErrorKind::verification: return PERSRM_ERR_VERIFICATION;
  }
  return PERSRM_ERR_INTERNAL;
}

template <typename F>
persrm_status guarded(persrm_context* ctx, F&& f) {
  auto fail = [&](persrm_status s, const char* what) {
    if (ctx) ctx->last_error = what;
    return s;
  };
  try {
    f();
    if (ctx) ctx->last_error.clear();
    return PERSRM_OK;
  } catch (const persrm::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(PERSRM_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return fail(PERSRM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PERSRM_ERR_INTERNAL, "unknown error");
  }
}

template <typename F>
persrm_status stage(persrm_context* ctx, F&& f) {
  if (!ctx) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] { ctx->last_summary = f().dump(); });
}

std::filesystem::path req(const char* p, const char* what) {
  if (!p || !*p) throw persrm::ConfigError(std::string(what) + " path is required");
  return p;
}

std::optional<std::filesystem::path> opt(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::filesystem::path(p);
}

persrm::PoolPaths pool(const char* corpus, const char* splits) { return {opt(corpus), opt(splits)}; }

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* persrm_version(void) { return persrm::kVersion; }

persrm_context* persrm_context_create(void) {
  try {
    return new persrm_context();
  } catch (...) {
    return nullptr;
  }
}

void persrm_context_destroy(persrm_context* ctx) { delete ctx; }

const char* persrm_last_error(const persrm_context* ctx) { return ctx ? ctx->last_error.c_str() : ""; }
const char* persrm_last_summary(const persrm_context* ctx) { return ctx ? ctx->last_summary.c_str() : "{}"; }

void persrm_string_free(char* s) { std::free(s); }

persrm_status persrm_config_load(persrm_context* ctx, const char* path) {
  if (!ctx) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] { ctx->config.load_file(req(path, "config")); });
}

persrm_status persrm_config_apply_env(persrm_context* ctx) {
  if (!ctx) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] { ctx->config.apply_env(); });
}

persrm_status persrm_config_set(persrm_context* ctx, const char* key, const char* value) {
  if (!ctx) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] {
    if (!key || !value) throw persrm::ConfigError("config_set needs a key and a value");
    ctx->config.set(key, value);
  });
}

persrm_status persrm_config_dump(persrm_context* ctx, char** json_out) {
  if (!ctx || !json_out) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] { *json_out = dup(ctx->config.resolved().dump(2)); });
}

persrm_status persrm_ingest(persrm_context* ctx, const char* root, const char* manifest_csv, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_ingest(ctx->config, req(root, "corpus root"), req(manifest_csv, "manifest"), req(out_dir, "output"));
  });
}

persrm_status persrm_split(persrm_context* ctx, const char* corpus, const char* spec, const char* out_dir) {
  return stage(ctx, [&] { return persrm::stage_split(ctx->config, req(corpus, "corpus"), opt(spec), req(out_dir, "output")); });
}

persrm_status persrm_verify_split(persrm_context* ctx, const char* corpus, const char* splits, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_verify_split(ctx->config, req(corpus, "corpus"), req(splits, "splits"), req(out_dir, "output"));
  });
}

persrm_status persrm_augment(persrm_context* ctx, const char* corpus, const char* splits, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_augment(ctx->config, req(corpus, "corpus"), req(splits, "splits"), req(out_dir, "output"));
  });
}

persrm_status persrm_trace(persrm_context* ctx, const char* pairs, const char* corpus, const char* splits,
                           const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_trace(ctx->config, req(pairs, "pairs"), pool(corpus, splits), req(out_dir, "output"));
  });
}

persrm_status persrm_filter(persrm_context* ctx, const char* traces, const char* out_dir) {
  return stage(ctx, [&] { return persrm::stage_filter(ctx->config, req(traces, "traces"), req(out_dir, "output")); });
}

persrm_status persrm_export_sft(persrm_context* ctx, const char* pairs, const char* traces, const char* corpus,
                                const char* splits, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_export_sft(ctx->config, req(pairs, "pairs"), req(traces, "traces"), pool(corpus, splits),
                                    req(out_dir, "output"));
  });
}

persrm_status persrm_export_rft(persrm_context* ctx, const char* pairs, const char* traces, const char* corpus,
                                const char* splits, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_export_rft(ctx->config, req(pairs, "pairs"), opt(traces), pool(corpus, splits),
                                    req(out_dir, "output"));
  });
}

persrm_status persrm_score_rollouts(persrm_context* ctx, const char* rollouts, const char* orders, const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_score_rollouts(ctx->config, req(rollouts, "rollouts"), opt(orders), req(out_dir, "output"));
  });
}

persrm_status persrm_eval(persrm_context* ctx, const char* pairs, const char* corpus, const char* splits,
                          const char* out_dir) {
  return stage(ctx, [&] {
    return persrm::stage_eval(ctx->config, req(pairs, "pairs"), pool(corpus, splits), req(out_dir, "output"));
  });
}

persrm_status persrm_judge_quality(persrm_context* ctx, const char* pairs, const char* out_dir) {
  return stage(ctx, [&] { return persrm::stage_judge_quality(ctx->config, req(pairs, "pairs"), req(out_dir, "output")); });
}

persrm_status persrm_report(persrm_context* ctx, const char* dir, char** text_out) {
  if (!ctx || !text_out) return PERSRM_ERR_INTERNAL;
  return guarded(ctx, [&] { *text_out = dup(persrm::render_report(req(dir, "report directory"))); });
}

persrm_status persrm_group_advantages(persrm_context* ctx, const double* rewards, size_t n, int sample_std,
                                      double* advantages_out) {
  return guarded(ctx, [&] {
    if ((!rewards || !advantages_out) && n) throw persrm::DataError("null buffer");
    auto adv = persrm::group_advantages(std::span<const double>(rewards, n),
                                        sample_std ? persrm::StdMode::sample : persrm::StdMode::population);
    std::copy(adv.begin(), adv.end(), advantages_out);
  });
}

persrm_status persrm_token_kl(persrm_context* ctx, double current_logprob, double reference_logprob, double* kl_out) {
  return guarded(ctx, [&] {
    if (!kl_out) throw persrm::DataError("null output");
    *kl_out = persrm::token_kl(current_logprob, reference_logprob);
  });
}

persrm_status persrm_rft_reward(persrm_context* ctx, const char* completion, int neg_first, int* reward_out) {
  return guarded(ctx, [&] {
    if (!completion || !reward_out) throw persrm::DataError("null argument");
    *reward_out =
        persrm::rft_reward(completion, neg_first ? persrm::Order::neg_first : persrm::Order::pos_first).value;
  });
}

}  // extern "C"
