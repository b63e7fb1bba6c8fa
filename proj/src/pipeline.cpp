#include "pipeline.hpp"

#include <algorithm>
#include <set>

namespace persrm {

namespace fs = std::filesystem;

std::shared_ptr<Backend> make_backend(const Config& config) {
  auto kind = config.str("gateway.backend");
  if (kind == "mock") return std::make_shared<MockBackend>(mock_script(config), prompt_set(config));
  if (kind == "remote") {
    RemoteConfig rc;
    rc.api_base = config.str("gateway.api_base");
    rc.model = config.str("gateway.model");
    rc.api_key = config.get("gateway.api_key").get<std::string>();
    rc.timeout_s = static_cast<int>(config.integer("gateway.timeout_s"));
    return std::make_shared<RemoteBackend>(rc);
  }
  throw ConfigError("gateway.backend must be mock or remote");
}

std::unique_ptr<Gateway> make_gateway(const Config& config, const std::optional<fs::path>& audit_path) {
  auto gw = std::make_unique<Gateway>(make_backend(config), retry_policy(config));
  if (audit_path && config.flag("gateway.audit")) gw->set_audit_log(std::make_shared<AuditLog>(*audit_path));
  return gw;
}

fs::path quarantine_path(const fs::path& out) {
  fs::path p = out;
  if (!p.has_filename()) p = p.parent_path();
  return p.string() + ".quarantine";
}

namespace {

fs::path staging_path(const fs::path& out) {
  fs::path p = out;
  if (!p.has_filename()) p = p.parent_path();
  return p.string() + ".staging";
}

// Outputs under logs/ (audit trails with wall-clock latencies) are left out of the digest list.
json output_digests(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == kManifestName || rel.rfind("logs/", 0) == 0) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[f] = sha256_file(dir / f);
  return out;
}

void check_replaceable(const fs::path& out) {
  std::error_code ec;
  if (!fs::exists(out, ec)) return;
  if (!fs::is_directory(out, ec)) throw ConfigError("output path " + out.string() + " exists and is not a directory");
  if (fs::is_empty(out, ec) || fs::exists(out / kManifestName, ec)) return;
  throw ConfigError("refusing to replace " + out.string() + ": it is not a pipeline output directory");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

Corpus load_corpus_checked(const fs::path& p) { return load_corpus(p); }

SplitAssignment load_assignment(const fs::path& p) { return parse_assignment(read_file(p)); }

struct Pool {
  Corpus corpus;
  SplitAssignment assignment;
  std::unique_ptr<SplitIndex> index;
};

std::unique_ptr<Pool> load_pool(const PoolPaths& paths) {
  if (!paths.corpus && !paths.splits) return nullptr;
  if (!paths.corpus || !paths.splits) throw ConfigError("an exemplar pool needs both --corpus and --splits");
  auto pool = std::make_unique<Pool>();
  pool->corpus = load_corpus_checked(*paths.corpus);
  pool->assignment = load_assignment(*paths.splits);
  pool->index = std::make_unique<SplitIndex>(pool->corpus, pool->assignment);
  return pool;
}

void add_pool_inputs(std::vector<NamedInput>& inputs, const PoolPaths& pool) {
  if (pool.corpus) inputs.push_back({"corpus", *pool.corpus});
  if (pool.splits) inputs.push_back({"splits", *pool.splits});
}

fs::path audit_path(const fs::path& staging) { return staging / "logs" / "gateway.jsonl"; }

SplitSpec default_split_spec(std::uint64_t seed) {
  SplitSpec s;
  s.seed = seed;
  s.counts[CorpusLabel::ccat] = {45, 2, 3};
  s.counts[CorpusLabel::cmcc] = {18, 1, 2};
  s.withheld_genres = {Genre::blog, Genre::interview, Genre::chat};
  return s;
}

std::string first_violation(const VerificationReport& r) {
  const auto& v = r.violations.front();
  return v.kind + " (" + v.subject + ")";
}

}  // namespace

json run_stage(const std::string& subcommand, const Config& config, const std::vector<NamedInput>& inputs,
               const fs::path& out, const StageBody& body) {
  if (out.empty()) throw ConfigError("an output directory (--out) is required");
  config.validate();
  json input_digests = json::object();
  for (const auto& in : inputs) {
    std::error_code ec;
    if (!fs::is_regular_file(in.path, ec)) throw DataError(in.name + " input " + in.path.string() + " does not exist");
    input_digests[in.name] = {{"path", in.path.generic_string()}, {"sha256", sha256_file(in.path)}};
  }
  check_replaceable(out);

  const fs::path staging = staging_path(out);
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    json summary = body(staging);
    json manifest{{"subcommand", subcommand},
                  {"version", kVersion},
                  {"seed", run_seed(config)},
                  {"config_digest", config.digest()},
                  {"config", config.resolved()},
                  {"inputs", input_digests},
                  {"outputs", output_digests(staging)},
                  {"summary", summary}};
    write_json(staging / kManifestName, manifest);
    check_replaceable(out);
    fs::remove_all(out);
    fs::rename(staging, out);
    return summary;
  } catch (...) {
    std::error_code ec;
    const fs::path q = quarantine_path(out);
    fs::remove_all(q, ec);
    fs::rename(staging, q, ec);
    throw;
  }
}

json stage_ingest(const Config& c, const fs::path& root, const fs::path& manifest, const fs::path& out) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("corpus root " + root.string() + " is not a directory");
  return run_stage("ingest", c, {{"manifest", manifest}}, out, [&](const fs::path& staging) {
    auto result = ingest(root, manifest);
    write_file(staging / "corpus.jsonl", corpus_to_jsonl(result.corpus));
    write_json(staging / "ingest_report.json", to_json(result.report));
    std::set<std::string> authors;
    for (const auto& d : result.corpus) authors.insert(d.author_id);
    return json{{"documents", result.corpus.size()},
                {"authors", authors.size()},
                {"rejected", result.report.rejected.size()},
                {"lead_queries", result.report.lead_queries}};
  });
}

json stage_split(const Config& c, const fs::path& corpus_path, const std::optional<fs::path>& spec_path,
                 const fs::path& out) {
  std::vector<NamedInput> inputs{{"corpus", corpus_path}};
  if (spec_path) inputs.push_back({"spec", *spec_path});
  return run_stage("split", c, inputs, out, [&](const fs::path& staging) {
    Corpus corpus = load_corpus_checked(corpus_path);
    SplitSpec spec = default_split_spec(run_seed(c));
    if (spec_path) {
      json j;
      try {
        j = json::parse(read_file(*spec_path));
      } catch (const json::exception& e) {
        throw DataError("split spec " + spec_path->string() + ": " + e.what());
      }
      spec = split_spec_from_json(j, run_seed(c));
    }
    SplitAssignment a = make_splits(corpus, spec);
    write_file(staging / "splits.json", serialize(a));
    auto report = verify_splits(corpus, a);
    if (!report.ok()) {
      write_json(staging / "verification.json", to_json(report));
      throw VerificationError("split failed verification: " + std::to_string(report.violations.size()) +
                              " violations, first " + first_violation(report));
    }
    json counts = json::object();
    for (const auto& [label, n] : spec.counts) {
      std::set<std::string> in_corpus;
      for (const auto& d : corpus)
        if (d.corpus == label) in_corpus.insert(d.author_id);
      json row{{"train", 0}, {"val", 0}, {"test", 0}};
      for (const auto& [author, split] : a.authors)
        if (in_corpus.count(author)) row[std::string(to_string(split))] = row[std::string(to_string(split))].get<int>() + 1;
      counts[std::string(to_string(label))] = row;
    }
    return json{{"authors", counts}, {"cross_domain_docs", a.cross_domain_docs.size()}, {"seed", a.seed}};
  });
}

json stage_verify_split(const Config& c, const fs::path& corpus_path, const fs::path& splits_path, const fs::path& out) {
  return run_stage("verify-split", c, {{"corpus", corpus_path}, {"splits", splits_path}}, out,
                   [&](const fs::path& staging) {
                     Corpus corpus = load_corpus_checked(corpus_path);
                     auto report = verify_splits(corpus, load_assignment(splits_path));
                     write_json(staging / "verification.json", to_json(report));
                     if (!report.ok())
                       throw VerificationError(std::to_string(report.violations.size()) + " split violations, first " +
                                               first_violation(report));
                     return json{{"violations", 0}};
                   });
}

json stage_augment(const Config& c, const fs::path& corpus_path, const fs::path& splits_path, const fs::path& out) {
  return run_stage("augment", c, {{"corpus", corpus_path}, {"splits", splits_path}}, out, [&](const fs::path& staging) {
    Corpus corpus = load_corpus_checked(corpus_path);
    SplitAssignment a = load_assignment(splits_path);
    SplitIndex index(corpus, a);
    auto gateway = make_gateway(c, audit_path(staging));
    auto result = build_pairs(index, augment_options(c), *gateway);
    write_file(staging / "pairs.jsonl", pairs_to_jsonl(result.pairs));
    write_json(staging / "augment_report.json", to_json(result.report));
    return json{{"pairs", result.pairs.size()},
                {"planned", result.report.planned},
                {"failures", result.report.failures.size()},
                {"per_cell", result.report.per_cell}};
  });
}

json stage_trace(const Config& c, const fs::path& pairs_path, const PoolPaths& pool_paths, const fs::path& out) {
  std::vector<NamedInput> inputs{{"pairs", pairs_path}};
  add_pool_inputs(inputs, pool_paths);
  return run_stage("trace", c, inputs, out, [&](const fs::path& staging) {
    auto pairs = load_pairs(pairs_path);
    auto pool = load_pool(pool_paths);
    auto gateway = make_gateway(c, audit_path(staging));
    auto records = generate_traces(pairs, *gateway, trace_options(c), pool ? pool->index.get() : nullptr);
    write_file(staging / "traces.jsonl", trace_records_to_jsonl(records));
    std::map<std::string, std::size_t> failures;
    std::size_t valid = 0;
    for (const auto& r : records) {
      if (r.verdict.valid) {
        ++valid;
      } else {
        ++failures[r.verdict.failure_reason ? std::string(to_string(*r.verdict.failure_reason)) : "gateway_error"];
      }
    }
    return json{{"records", records.size()}, {"valid", valid}, {"failures", failures}};
  });
}

json stage_filter(const Config& c, const fs::path& traces_path, const fs::path& out) {
  return run_stage("filter", c, {{"traces", traces_path}}, out, [&](const fs::path& staging) {
    auto result = faithfulness_filter(load_trace_records(traces_path));
    write_file(staging / "filtered.jsonl", trace_records_to_jsonl(result.kept));
    write_json(staging / "filter_report.json", to_json(result.report));
    return to_json(result.report);
  });
}

namespace {

std::map<std::string, const PreferencePair*> index_pairs(const std::vector<PreferencePair>& pairs) {
  std::map<std::string, const PreferencePair*> out;
  for (const auto& p : pairs)
    if (!out.emplace(p.id, &p).second) throw DataError("duplicate pair id " + p.id);
  return out;
}

}  // namespace

json stage_export_sft(const Config& c, const fs::path& pairs_path, const fs::path& traces_path,
                      const PoolPaths& pool_paths, const fs::path& out) {
  std::vector<NamedInput> inputs{{"pairs", pairs_path}, {"traces", traces_path}};
  add_pool_inputs(inputs, pool_paths);
  return run_stage("export-sft", c, inputs, out, [&](const fs::path& staging) {
    auto pairs = load_pairs(pairs_path);
    auto by_id = index_pairs(pairs);
    auto traces = load_trace_records(traces_path);
    auto pool = load_pool(pool_paths);
    auto options = sft_options(c);
    std::vector<SftRecord> records;
    std::size_t pos_first = 0;
    for (const auto& t : traces) {
      auto it = by_id.find(t.pair_id);
      if (it == by_id.end()) throw DataError("trace " + t.pair_id + " has no matching pair");
      if (!t.evaluation) throw VerificationError("trace " + t.pair_id + " is not a valid evaluation; run filter first");
      records.push_back(build_sft_record(*it->second, *t.evaluation, options, pool ? pool->index.get() : nullptr));
      pos_first += records.back().order == Order::pos_first ? 1 : 0;
    }
    auto summary = export_jsonl(records, staging / "sft.jsonl");
    double frac = records.empty() ? 0.0 : static_cast<double>(pos_first) / static_cast<double>(records.size());
    json s{{"sft", to_json(summary)}, {"pos_first_fraction", frac}, {"loss_on", "target"}};
    write_json(staging / "export_summary.json", s);
    return s;
  });
}

json stage_export_rft(const Config& c, const fs::path& pairs_path, const std::optional<fs::path>& traces_path,
                      const PoolPaths& pool_paths, const fs::path& out) {
  std::vector<NamedInput> inputs{{"pairs", pairs_path}};
  if (traces_path) inputs.push_back({"traces", *traces_path});
  add_pool_inputs(inputs, pool_paths);
  return run_stage("export-rft", c, inputs, out, [&](const fs::path& staging) {
    auto pairs = load_pairs(pairs_path);
    const bool filtered = c.str("export.rft_source") == "filtered";
    if (filtered) {
      if (!traces_path) throw ConfigError("export.rft_source = filtered needs --traces");
      std::set<std::string> keep;
      for (const auto& t : load_trace_records(*traces_path))
        if (t.evaluation && t.evaluation->r_plus > t.evaluation->r_minus) keep.insert(t.pair_id);
      std::erase_if(pairs, [&](const PreferencePair& p) { return !keep.count(p.id); });
    }
    auto pool = load_pool(pool_paths);
    auto result = export_rft_prompts(pairs, staging / "rft_prompts.jsonl", staging / "rft_orders.jsonl", sft_options(c),
                                     pool ? pool->index.get() : nullptr);
    json s{{"prompts", to_json(result.prompts)}, {"orders", to_json(result.orders)}, {"source", c.str("export.rft_source")}};
    write_json(staging / "export_summary.json", s);
    return s;
  });
}

json stage_score_rollouts(const Config& c, const fs::path& rollouts_path, const std::optional<fs::path>& orders_path,
                          const fs::path& out) {
  std::vector<NamedInput> inputs{{"rollouts", rollouts_path}};
  if (orders_path) inputs.push_back({"orders", *orders_path});
  return run_stage("score-rollouts", c, inputs, out, [&](const fs::path& staging) {
    std::map<std::string, Order> orders;
    if (orders_path) orders = load_order_sidecar(*orders_path);
    auto config = grpo_config(c);
    auto mode = grpo_std_mode(c);
    auto range = score_range(c);
    std::vector<json> rows;
    std::size_t off_size = 0;
    std::size_t with_objective = 0;
    for (const auto& j : read_jsonl(rollouts_path)) {
      auto group = rollout_group_from_json(j);
      Order order = Order::pos_first;
      if (orders_path) {
        auto it = orders.find(group.prompt_id);
        if (it == orders.end()) throw DataError("prompt " + group.prompt_id + " has no entry in the order sidecar");
        order = it->second;
      }
      auto scored = score_group(group, order, config, mode, range);
      off_size += scored.rewards.size() != static_cast<std::size_t>(config.group_size) ? 1 : 0;
      with_objective += scored.grpo ? 1 : 0;
      rows.push_back(to_json(scored));
    }
    write_file(staging / "scores.jsonl", to_jsonl(rows));
    return json{{"groups", rows.size()}, {"groups_off_group_size", off_size}, {"groups_with_objective", with_objective}};
  });
}

json stage_eval(const Config& c, const fs::path& pairs_path, const PoolPaths& pool_paths, const fs::path& out) {
  std::vector<NamedInput> inputs{{"pairs", pairs_path}};
  add_pool_inputs(inputs, pool_paths);
  return run_stage("eval", c, inputs, out, [&](const fs::path& staging) {
    auto pairs = load_pairs(pairs_path);
    auto pool = load_pool(pool_paths);
    auto gateway = make_gateway(c, audit_path(staging));
    auto options = eval_options(c);
    const SplitIndex* index = pool ? pool->index.get() : nullptr;
    AccuracyReport report = eval_mode(c) == EvalMode::generative ? eval_generative(pairs, *gateway, options, index)
                                                                 : eval_scalar(pairs, *gateway, options, index);
    json j = to_json(report);
    write_json(staging / "eval_report.json", j);
    write_file(staging / "eval_table.txt", format_table(report));
    if (c.flag("eval.dump_records")) {
      std::vector<json> rows;
      for (const auto& r : report.records) rows.push_back(to_json(r));
      write_file(staging / "eval_records.jsonl", to_jsonl(rows));
    }
    j["table"] = format_table(report);
    return j;
  });
}

json stage_judge_quality(const Config& c, const fs::path& pairs_path, const fs::path& out) {
  return run_stage("judge-quality", c, {{"pairs", pairs_path}}, out, [&](const fs::path& staging) {
    auto items = judge_items_from_pairs(load_pairs(pairs_path));
    auto gateway = make_gateway(c, audit_path(staging));
    auto report = judge_style_similarity(items, *gateway, judge_options(c));
    json j = to_json(report);
    write_json(staging / "judge_report.json", j);
    write_file(staging / "judge_table.txt", format_table(report));
    j["table"] = format_table(report);
    return j;
  });
}

std::string render_report(const fs::path& dir) {
  std::error_code ec;
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::is_regular_file(manifest_path, ec))
    throw DataError(dir.string() + " has no " + kManifestName + "; not a pipeline output directory");
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("unreadable manifest in " + dir.string() + ": " + e.what());
  }
  std::string out;
  out += "subcommand: " + m.value("subcommand", "?") + "\n";
  out += "version: " + m.value("version", "?") + "\n";
  out += "seed: " + m["seed"].dump() + "\n";
  out += "config digest: " + m.value("config_digest", "?") + "\n";
  out += "inputs:\n";
  for (auto& [name, v] : m["inputs"].items())
    out += "  " + name + ": " + v.value("path", "") + " (" + v.value("sha256", "").substr(0, 12) + ")\n";
  out += "outputs:\n";
  std::size_t mismatched = 0;
  for (auto& [name, digest] : m["outputs"].items()) {
    std::string now = fs::is_regular_file(dir / name, ec) ? sha256_file(dir / name) : std::string("missing");
    bool same = now == digest.get<std::string>();
    mismatched += same ? 0 : 1;
    out += "  " + name + (same ? "" : "  [changed since run]") + "\n";
  }
  for (const char* table : {"eval_table.txt", "judge_table.txt"}) {
    if (fs::is_regular_file(dir / table, ec)) out += "\n" + read_file(dir / table);
  }
  json summary = m.value("summary", json::object());
  summary.erase("table");
  out += "\nsummary: " + summary.dump() + "\n";
  if (mismatched) out += std::to_string(mismatched) + " output(s) differ from the manifest\n";
  return out;
}

}  // namespace persrm
