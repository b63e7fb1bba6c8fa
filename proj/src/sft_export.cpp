#include "sft_export.hpp"

#include <set>

namespace persrm {

SftRecord build_sft_record(const PreferencePair& pair, const Evaluation& evaluation, const SftOptions& options,
                           const SplitIndex* pool) {
  if (!(evaluation.r_plus > evaluation.r_minus)) {
    throw VerificationError("pair " + pair.id + ": evaluation scores " + std::to_string(evaluation.r_plus) + " vs " +
                            std::to_string(evaluation.r_minus) + " did not pass the faithfulness filter");
  }
  SftRecord r;
  r.pair_id = pair.id;
  r.order = resolve_order(options.order_policy, options.seed, pair.id);
  r.prompt = render_judge_prompt(pair, options.exemplar_count, r.order, pool, options.prompts, options.word_cap).prompt;
  r.target = serialize_evaluation(evaluation, r.order);
  r.author_id = pair.author_id;
  r.split = std::string(to_string(pair.split));
  r.strategies = std::string(to_string(pair.pos_strategy)) + "/" + std::string(to_string(pair.neg_strategy));

  // Must hold by construction; checked because the trainer takes the file on trust.
  auto back = parse_evaluation(r.target, r.order);
  if (!back.verdict.valid || back.evaluation->r_plus != evaluation.r_plus || back.evaluation->r_minus != evaluation.r_minus)
    throw VerificationError("pair " + pair.id + ": serialized target does not parse back to its scores");
  return r;
}

json to_json(const SftRecord& r) {
  json meta{{"order", to_string(r.order)},
            {"pair_id", r.pair_id},
            {"author_id", r.author_id},
            {"strategies", r.strategies},
            {"split", r.split},
            {"target_offset", r.prompt.size()}};
  return json{{"meta", meta}, {"prompt", r.prompt}, {"target", r.target}};
}

json to_json(const FileSummary& s) { return json{{"count", s.count}, {"bytes", s.bytes}, {"sha256", s.sha256}}; }

namespace {

FileSummary write_rows(const std::vector<json>& rows, const std::filesystem::path& path) {
  std::string text = to_jsonl(rows);
  try {
    write_file(path, text);
  } catch (const std::exception& e) {
    throw DataError("cannot write " + path.string() + ": " + e.what());
  }
  return {rows.size(), text.size(), sha256_hex(text)};
}

}  // namespace

FileSummary export_jsonl(const std::vector<SftRecord>& records, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  return write_rows(rows, path);
}

std::vector<RftPrompt> build_rft_prompts(const std::vector<PreferencePair>& pairs, const SftOptions& options,
                                         const SplitIndex* pool) {
  std::vector<RftPrompt> out;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!seen.insert(p.id).second) throw DataError("duplicate pair id " + p.id);
    RftPrompt r;
    r.pair_id = p.id;
    r.order = resolve_order(options.order_policy, options.seed, p.id);
    r.prompt = render_judge_prompt(p, options.exemplar_count, r.order, pool, options.prompts, options.word_cap).prompt;
    out.push_back(std::move(r));
  }
  return out;
}

RftExport export_rft_prompts(const std::vector<PreferencePair>& pairs, const std::filesystem::path& prompts_path,
                             const std::filesystem::path& orders_path, const SftOptions& options,
                             const SplitIndex* pool) {
  auto prompts = build_rft_prompts(pairs, options, pool);
  std::vector<json> prompt_rows;
  std::vector<json> order_rows;
  for (const auto& p : prompts) {
    prompt_rows.push_back(json{{"pair_id", p.pair_id}, {"prompt", p.prompt}, {"order", to_string(p.order)}});
    order_rows.push_back(json{{"prompt_id", p.pair_id}, {"order", to_string(p.order)}});
  }
  return {write_rows(prompt_rows, prompts_path), write_rows(order_rows, orders_path)};
}

std::map<std::string, Order> load_order_sidecar(const std::filesystem::path& path) {
  std::map<std::string, Order> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      auto id = j.at("prompt_id").get<std::string>();
      auto order = parse_order(j.at("order").get<std::string>());
      if (!order) throw DataError("order sidecar: bad order for " + id);
      if (!out.emplace(id, *order).second) throw DataError("order sidecar: prompt " + id + " listed twice");
    } catch (const json::exception& e) {
      throw DataError(std::string("order sidecar: ") + e.what());
    }
  }
  return out;
}

}  // namespace persrm
