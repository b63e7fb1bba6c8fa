// Command-line front end over the C API.
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "persrm/persrm.h"

namespace {

struct Context {
  persrm_context* ctx = persrm_context_create();
  ~Context() { persrm_context_destroy(ctx); }
};

int fail(persrm_context* ctx, persrm_status s) {
  std::fprintf(stderr, "persrm: error: %s\n", persrm_last_error(ctx));
  return static_cast<int>(s);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  Context holder;
  persrm_context* ctx = holder.ctx;
  if (!ctx) {
    std::fprintf(stderr, "persrm: error: out of memory\n");
    return 1;
  }

  CLI::App app{"Personalized reward-model data pipeline: corpus splits, preference pairs, judge traces, "
               "SFT/RFT exports, rollout scoring and evaluation."};
  app.set_version_flag("--version", std::string(persrm_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  int parallelism = 0;
  long long seed = -1;
  app.add_option("-c,--config", config_path, "TOML config file (layered under environment and flags)")
      ->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override one config value, e.g. --set grpo.epsilon=0.1 (repeatable)");
  app.add_option("--parallelism", parallelism, "Concurrent gateway requests (gateway.parallelism)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Run seed (run.seed)")->check(CLI::NonNegativeNumber);

  std::string out;
  auto out_opt = [&](CLI::App* sub) { sub->add_option("-o,--out", out, "Output directory")->required(); };

  std::function<persrm_status()> action;

  std::string root, manifest;
  auto* ingest = app.add_subcommand("ingest", "Read a CSV manifest of documents into corpus.jsonl");
  ingest->add_option("--root", root, "Directory the manifest paths resolve against")->required();
  ingest->add_option("--manifest", manifest, "CSV with header id,author_id,genre,corpus,query,path")->required();
  out_opt(ingest);
  ingest->callback([&] { action = [&] { return persrm_ingest(ctx, root.c_str(), manifest.c_str(), out.c_str()); }; });

  std::string corpus, spec, splits;
  auto* split = app.add_subcommand("split", "Author-disjoint train/val/test split plus cross-domain docs");
  split->add_option("--corpus", corpus, "corpus.jsonl")->required();
  split->add_option("--spec", spec, "Split spec JSON (defaults to CCAT 45/2/3, CMCC 18/1/2, blog/interview/chat withheld)");
  out_opt(split);
  split->callback([&] { action = [&] { return persrm_split(ctx, corpus.c_str(), opt(spec), out.c_str()); }; });

  auto* verify = app.add_subcommand("verify-split", "Check a split assignment; exit 5 on any violation");
  verify->add_option("--corpus", corpus, "corpus.jsonl")->required();
  verify->add_option("--splits", splits, "splits.json")->required();
  out_opt(verify);
  verify->callback([&] { action = [&] { return persrm_verify_split(ctx, corpus.c_str(), splits.c_str(), out.c_str()); }; });

  auto* augment = app.add_subcommand("augment", "Build preference pairs (pairs.jsonl)");
  augment->add_option("--corpus", corpus, "corpus.jsonl")->required();
  augment->add_option("--splits", splits, "splits.json")->required();
  out_opt(augment);
  augment->callback([&] { action = [&] { return persrm_augment(ctx, corpus.c_str(), splits.c_str(), out.c_str()); }; });

  std::string pairs, traces;
  auto pool_opts = [&](CLI::App* sub) {
    sub->add_option("--corpus", corpus, "corpus.jsonl, for extra exemplars (with --splits)");
    sub->add_option("--splits", splits, "splits.json, for extra exemplars (with --corpus)");
  };

  auto* trace = app.add_subcommand("trace", "Generate judge evaluations for each pair (traces.jsonl)");
  trace->add_option("--pairs", pairs, "pairs.jsonl")->required();
  pool_opts(trace);
  out_opt(trace);
  trace->callback([&] {
    action = [&] { return persrm_trace(ctx, pairs.c_str(), opt(corpus), opt(splits), out.c_str()); };
  });

  auto* filter = app.add_subcommand("filter", "Keep traces that score the positive higher (filtered.jsonl)");
  filter->add_option("--traces", traces, "traces.jsonl")->required();
  out_opt(filter);
  filter->callback([&] { action = [&] { return persrm_filter(ctx, traces.c_str(), out.c_str()); }; });

  auto* sft = app.add_subcommand("export-sft", "Write sft.jsonl from pairs and filtered traces");
  sft->add_option("--pairs", pairs, "pairs.jsonl")->required();
  sft->add_option("--traces", traces, "filtered.jsonl")->required();
  pool_opts(sft);
  out_opt(sft);
  sft->callback([&] {
    action = [&] { return persrm_export_sft(ctx, pairs.c_str(), traces.c_str(), opt(corpus), opt(splits), out.c_str()); };
  });

  auto* rft = app.add_subcommand("export-rft", "Write rft_prompts.jsonl and the rft_orders.jsonl sidecar");
  rft->add_option("--pairs", pairs, "pairs.jsonl")->required();
  rft->add_option("--traces", traces, "filtered.jsonl (needed when export.rft_source = filtered)");
  pool_opts(rft);
  out_opt(rft);
  rft->callback([&] {
    action = [&] { return persrm_export_rft(ctx, pairs.c_str(), opt(traces), opt(corpus), opt(splits), out.c_str()); };
  });

  std::string rollouts, orders;
  auto* score = app.add_subcommand("score-rollouts", "Rewards, group advantages and objective for rollout groups");
  score->add_option("--rollouts", rollouts, "Rollout exchange JSONL")->required();
  score->add_option("--orders", orders, "rft_orders.jsonl sidecar (default: every prompt pos_first)");
  out_opt(score);
  score->callback([&] {
    action = [&] { return persrm_score_rollouts(ctx, rollouts.c_str(), opt(orders), out.c_str()); };
  });

  std::string mode, order_policy;
  int exemplars = 0;
  bool dump_records = false;
  auto* eval = app.add_subcommand("eval", "Pairwise accuracy per slice (CCAT / CMCC / cross-domain)");
  eval->add_option("--pairs", pairs, "pairs.jsonl with the evaluation pairs")->required();
  eval->add_option("--mode", mode, "generative or scalar (eval.mode)")->check(CLI::IsMember({"generative", "scalar"}));
  eval->add_option("--exemplars", exemplars, "Exemplars per prompt (eval.exemplar_count)")->check(CLI::PositiveNumber);
  eval->add_option("--order-policy", order_policy, "single or both_orders_mean (eval.order_policy)")
      ->check(CLI::IsMember({"single", "both_orders_mean"}));
  eval->add_flag("--dump-records", dump_records, "Also write eval_records.jsonl");
  pool_opts(eval);
  out_opt(eval);
  eval->callback([&] {
    action = [&] { return persrm_eval(ctx, pairs.c_str(), opt(corpus), opt(splits), out.c_str()); };
  });

  auto* judge = app.add_subcommand("judge-quality", "Style-similarity audit of pair members against exemplars");
  judge->add_option("--pairs", pairs, "pairs.jsonl")->required();
  out_opt(judge);
  judge->callback([&] { action = [&] { return persrm_judge_quality(ctx, pairs.c_str(), out.c_str()); }; });

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize an output directory from its manifest");
  report->add_option("dir", report_dir, "Output directory written by another subcommand")->required();
  report->callback([&] {
    action = [&]() -> persrm_status {
      char* text = nullptr;
      persrm_status s = persrm_report(ctx, report_dir.c_str(), &text);
      if (s == PERSRM_OK) {
        std::fputs(text, stdout);
        persrm_string_free(text);
      }
      return s;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(PERSRM_ERR_CONFIG);
  }

  // file < environment < flags
  persrm_status s = PERSRM_OK;
  if (!config_path.empty() && (s = persrm_config_load(ctx, config_path.c_str())) != PERSRM_OK) return fail(ctx, s);
  if ((s = persrm_config_apply_env(ctx)) != PERSRM_OK) return fail(ctx, s);
  for (const auto& kv : sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "persrm: error: --set expects key=value, got '%s'\n", kv.c_str());
      return PERSRM_ERR_CONFIG;
    }
    if ((s = persrm_config_set(ctx, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != PERSRM_OK)
      return fail(ctx, s);
  }
  std::vector<std::pair<std::string, std::string>> flags;
  if (parallelism > 0) flags.emplace_back("gateway.parallelism", std::to_string(parallelism));
  if (seed >= 0) flags.emplace_back("run.seed", std::to_string(seed));
  if (!mode.empty()) flags.emplace_back("eval.mode", mode);
  if (exemplars > 0) flags.emplace_back("eval.exemplar_count", std::to_string(exemplars));
  if (!order_policy.empty()) flags.emplace_back("eval.order_policy", order_policy);
  if (dump_records) flags.emplace_back("eval.dump_records", "true");
  for (const auto& [k, v] : flags)
    if ((s = persrm_config_set(ctx, k.c_str(), v.c_str())) != PERSRM_OK) return fail(ctx, s);

  s = action();
  if (s != PERSRM_OK) return fail(ctx, s);
  if (!report->parsed()) {
    auto summary = nlohmann::json::parse(persrm_last_summary(ctx));
    if (summary.contains("table")) {
      std::fputs(summary["table"].get<std::string>().c_str(), stdout);
      summary.erase("table");
    }
    std::printf("%s: ok -> %s %s\n", app.get_subcommands().front()->get_name().c_str(), out.c_str(),
                summary.dump().c_str());
  }
  return 0;
}
