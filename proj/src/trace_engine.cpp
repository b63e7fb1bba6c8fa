#include "trace_engine.hpp"

#include <algorithm>
#include <array>

namespace persrm {

namespace {
constexpr std::array<std::string_view, 6> kFailures{"missing_section", "section_order", "score_parse",
                                                    "score_count",     "score_range",   "duplicate_section"};
}

std::string_view to_string(Order o) { return o == Order::pos_first ? "pos_first" : "neg_first"; }

std::string_view to_string(OrderPolicy p) {
  switch (p) {
    case OrderPolicy::pos_first: return "pos_first";
    case OrderPolicy::neg_first: return "neg_first";
    case OrderPolicy::seeded_random: return "seeded_random";
  }
  return "seeded_random";
}

std::optional<Order> parse_order(std::string_view s) {
  if (s == "pos_first") return Order::pos_first;
  if (s == "neg_first") return Order::neg_first;
  return std::nullopt;
}

std::optional<OrderPolicy> parse_order_policy(std::string_view s) {
  if (s == "pos_first") return OrderPolicy::pos_first;
  if (s == "neg_first") return OrderPolicy::neg_first;
  if (s == "seeded_random") return OrderPolicy::seeded_random;
  return std::nullopt;
}

Order resolve_order(OrderPolicy policy, std::uint64_t seed, std::string_view pair_id) {
  switch (policy) {
    case OrderPolicy::pos_first: return Order::pos_first;
    case OrderPolicy::neg_first: return Order::neg_first;
    case OrderPolicy::seeded_random: break;
  }
  return (derive_seed(seed, pair_id) >> 63) ? Order::neg_first : Order::pos_first;
}

std::string_view to_string(FormatFailure f) { return kFailures[static_cast<std::size_t>(f)]; }

std::optional<FormatFailure> parse_format_failure(std::string_view s) {
  for (std::size_t i = 0; i < kFailures.size(); ++i)
    if (kFailures[i] == s) return static_cast<FormatFailure>(i);
  return std::nullopt;
}

// ---------------- parser ----------------

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct ScoreGroup {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing "]]"
  long a = 0;
  long b = 0;
};

// Integer with optional sign; magnitudes beyond 9 digits saturate so range checks still fire.
bool read_int(std::string_view s, std::size_t& i, long& out) {
  bool neg = false;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    neg = s[i] == '-';
    ++i;
  }
  std::size_t start = i;
  long v = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
    if (v < 1000000000L) v = v * 10 + (s[i] - '0');
    ++i;
  }
  if (i == start) return false;
  out = neg ? -v : v;
  return true;
}

void skip_ws(std::string_view s, std::size_t& i) {
  while (i < s.size() && is_ws(s[i])) ++i;
}

std::optional<ScoreGroup> read_group(std::string_view s, std::size_t at) {
  if (s.substr(at, 2) != "[[") return std::nullopt;
  ScoreGroup g;
  g.begin = at;
  std::size_t i = at + 2;
  skip_ws(s, i);
  if (!read_int(s, i, g.a)) return std::nullopt;
  skip_ws(s, i);
  if (i >= s.size() || s[i] != ',') return std::nullopt;
  ++i;
  skip_ws(s, i);
  if (!read_int(s, i, g.b)) return std::nullopt;
  skip_ws(s, i);
  if (s.substr(i, 2) != "]]") return std::nullopt;
  g.end = i + 2;
  return g;
}

std::vector<ScoreGroup> find_groups(std::string_view s) {
  std::vector<ScoreGroup> groups;
  std::size_t pos = 0;
  while ((pos = s.find("[[", pos)) != std::string_view::npos) {
    if (auto g = read_group(s, pos)) {
      groups.push_back(*g);
      pos = g->end;
    } else {
      ++pos;
    }
  }
  return groups;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

ParseOutcome fail(FormatFailure f) { return {{false, f}, std::nullopt}; }

}  // namespace

ParseOutcome parse_evaluation(std::string_view raw, Order order, ScoreRange range) {
  static constexpr std::array<std::string_view, 6> kTags{"<criteria>", "</criteria>", "<eval>",
                                                         "</eval>",    "<scores>",    "</scores>"};
  std::array<std::size_t, 6> first{};
  std::array<std::size_t, 6> count{};
  for (std::size_t t = 0; t < kTags.size(); ++t) {
    first[t] = raw.find(kTags[t]);
    count[t] = count_of(raw, kTags[t]);
  }
  for (std::size_t c : count)
    if (c == 0) return fail(FormatFailure::missing_section);
  for (std::size_t t = 1; t < kTags.size(); ++t)
    if (first[t] <= first[t - 1]) return fail(FormatFailure::section_order);

  auto inner = [&](std::size_t open) {
    std::size_t b = first[open] + kTags[open].size();
    return raw.substr(b, first[open + 1] - b);
  };
  std::string_view criteria = inner(0);
  std::string_view trace = inner(2);
  std::string_view scores = inner(4);

  auto groups = find_groups(scores);
  if (groups.empty()) return fail(FormatFailure::score_parse);
  if (groups.size() > 1) return fail(FormatFailure::score_count);
  // Only whitespace and an optional "Scores:" label may surround the group.
  {
    std::string_view before = trim(scores.substr(0, groups[0].begin));
    std::string_view after = trim(scores.substr(groups[0].end));
    if (!after.empty()) return fail(FormatFailure::score_parse);
    if (!before.empty()) {
      if (before.substr(0, 6) != "Scores") return fail(FormatFailure::score_parse);
      if (trim(before.substr(6)) != ":") return fail(FormatFailure::score_parse);
    }
  }
  if (!find_groups(criteria).empty() || !find_groups(trace).empty()) return fail(FormatFailure::score_count);

  const ScoreGroup& g = groups[0];
  if (g.a < range.min || g.a > range.max || g.b < range.min || g.b > range.max) return fail(FormatFailure::score_range);
  for (std::size_t c : count)
    if (c > 1) return fail(FormatFailure::duplicate_section);

  Evaluation e;
  e.criteria = std::string(trim(criteria));
  e.trace = std::string(trim(trace));
  int a = static_cast<int>(g.a);
  int b = static_cast<int>(g.b);
  e.r_plus = order == Order::pos_first ? a : b;
  e.r_minus = order == Order::pos_first ? b : a;
  e.raw = std::string(raw);
  return {{true, std::nullopt}, std::move(e)};
}

std::string serialize_evaluation(const Evaluation& e, Order order) {
  int a = order == Order::pos_first ? e.r_plus : e.r_minus;
  int b = order == Order::pos_first ? e.r_minus : e.r_plus;
  return "<criteria>\n" + e.criteria + "\n</criteria>\n\n<eval>\n" + e.trace + "\n</eval>\n\n<scores>\nScores: [[" +
         std::to_string(a) + "," + std::to_string(b) + "]]</scores>";
}

// ---------------- judge prompts ----------------

std::string render_judge_context(std::string_view query, const std::vector<std::string>& exemplars) {
  std::string out = "Query: " + std::string(query);
  for (std::size_t k = 0; k < exemplars.size(); ++k) {
    out += "\n\nExemplar " + std::to_string(k + 1) + ":\n" + exemplars[k];
  }
  return out;
}

RenderedJudgePrompt render_judge_prompt(const PreferencePair& pair, int exemplar_count, Order order,
                                        const SplitIndex* pool, const PromptSet& prompts, std::size_t word_cap) {
  if (exemplar_count < 1) throw ConfigError("exemplar_count must be >= 1");
  RenderedJudgePrompt out;
  out.order = order;
  std::size_t want = static_cast<std::size_t>(exemplar_count);
  for (std::size_t i = 0; i < pair.exemplars.size() && out.exemplars.size() < want; ++i)
    out.exemplars.push_back(pair.exemplars[i]);

  if (out.exemplars.size() < want && pool) {
    for (const Document* d : pool->docs_of(pair.split, pair.author_id)) {
      if (out.exemplars.size() >= want) break;
      std::string key = d->key();
      bool used = key == pair.positive_doc || key == pair.negative_doc ||
                  std::find(pair.exemplar_docs.begin(), pair.exemplar_docs.end(), key) != pair.exemplar_docs.end();
      if (!used) out.exemplars.push_back(truncate_words(d->body, word_cap).text);
    }
  }
  if (out.exemplars.size() < want) {
    throw IneligibleError("author " + pair.author_id + ": " + std::to_string(want) + " exemplars requested but only " +
                          std::to_string(out.exemplars.size()) + " available");
  }
  const std::string& a = order == Order::pos_first ? pair.positive : pair.negative;
  const std::string& b = order == Order::pos_first ? pair.negative : pair.positive;
  out.prompt = prompts.reasoning_trace.render(
      {{"context", render_judge_context(pair.query, out.exemplars)}, {"response a", a}, {"response b", b}});
  return out;
}

std::optional<JudgeSlots> parse_judge_prompt(std::string_view prompt, const PromptSet& prompts) {
  auto slots = prompts.reasoning_trace.parse(prompt);
  if (!slots) return std::nullopt;
  return JudgeSlots{slots->at("context"), slots->at("response a"), slots->at("response b")};
}

PromptRequest judge_request(const RenderedJudgePrompt& rendered, const GenerationOptions& gen, std::string tag) {
  PromptRequest r;
  r.user = rendered.prompt;
  r.tag = std::move(tag);
  r.temperature = gen.temperature;
  r.top_p = gen.top_p;
  r.max_tokens = gen.max_tokens;
  return r;
}

std::string generate_trace(const PreferencePair& pair, const Gateway& gateway, const TraceOptions& options,
                           const SplitIndex* pool) {
  Order order = resolve_order(options.order_policy, options.seed, pair.id);
  auto rendered = render_judge_prompt(pair, options.exemplar_count, order, pool, options.prompts, options.word_cap);
  auto result = gateway.complete(judge_request(rendered, options.gen));
  return result.texts.empty() ? std::string() : result.texts[0];
}

json to_json(const TraceRecord& r) {
  json j{{"pair_id", r.pair_id}, {"order", to_string(r.order)}, {"valid", r.verdict.valid}};
  if (r.evaluation) {
    j["criteria"] = r.evaluation->criteria;
    j["eval"] = r.evaluation->trace;
    j["r_plus"] = r.evaluation->r_plus;
    j["r_minus"] = r.evaluation->r_minus;
  } else {
    j["criteria"] = nullptr;
    j["eval"] = nullptr;
    j["r_plus"] = nullptr;
    j["r_minus"] = nullptr;
  }
  j["failure_reason"] = r.verdict.failure_reason ? json(to_string(*r.verdict.failure_reason)) : json(nullptr);
  j["raw"] = r.raw;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

TraceRecord trace_record_from_json(const json& j) {
  try {
    TraceRecord r;
    r.pair_id = j.at("pair_id").get<std::string>();
    auto order = parse_order(j.at("order").get<std::string>());
    if (!order) throw DataError("trace record " + r.pair_id + ": bad order");
    r.order = *order;
    r.raw = j.value("raw", "");
    r.error = j.value("error", "");
    r.verdict.valid = j.at("valid").get<bool>();
    if (j.contains("failure_reason") && j["failure_reason"].is_string())
      r.verdict.failure_reason = parse_format_failure(j["failure_reason"].get<std::string>());
    if (r.verdict.valid) {
      Evaluation e;
      e.criteria = j.at("criteria").get<std::string>();
      e.trace = j.at("eval").get<std::string>();
      e.r_plus = j.at("r_plus").get<int>();
      e.r_minus = j.at("r_minus").get<int>();
      e.raw = r.raw;
      r.evaluation = std::move(e);
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trace record: ") + e.what());
  }
}

std::vector<TraceRecord> load_trace_records(const std::filesystem::path& path) {
  std::vector<TraceRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(trace_record_from_json(row));
  return out;
}

std::string trace_records_to_jsonl(const std::vector<TraceRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  return to_jsonl(rows);
}

std::vector<TraceRecord> generate_traces(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                                         const TraceOptions& options, const SplitIndex* pool) {
  std::vector<TraceRecord> records(pairs.size());
  std::vector<PromptRequest> requests;
  requests.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    records[i].pair_id = pairs[i].id;
    records[i].order = resolve_order(options.order_policy, options.seed, pairs[i].id);
    auto rendered = render_judge_prompt(pairs[i], options.exemplar_count, records[i].order, pool, options.prompts,
                                        options.word_cap);
    requests.push_back(judge_request(rendered, options.gen));
  }
  auto items = gateway.complete_batch(requests, options.parallelism);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    TraceRecord& r = records[i];
    if (!items[i].ok()) {
      r.error = items[i].error;
      r.verdict = {false, std::nullopt};
      continue;
    }
    r.raw = items[i].result->texts.empty() ? std::string() : items[i].result->texts[0];
    auto parsed = parse_evaluation(r.raw, r.order, options.range);
    r.verdict = parsed.verdict;
    r.evaluation = std::move(parsed.evaluation);
  }
  return records;
}

json to_json(const FilterReport& r) {
  return {{"kept", r.kept}, {"dropped", {{"tie", r.tie}, {"inverted", r.inverted}, {"invalid", r.invalid}}}};
}

FilterResult faithfulness_filter(const std::vector<TraceRecord>& records) {
  FilterResult out;
  for (const auto& r : records) {
    if (!r.verdict.valid || !r.evaluation) {
      ++out.report.invalid;
    } else if (r.evaluation->r_plus > r.evaluation->r_minus) {
      ++out.report.kept;
      out.kept.push_back(r);
    } else if (r.evaluation->r_plus == r.evaluation->r_minus) {
      ++out.report.tie;
    } else {
      ++out.report.inverted;
    }
  }
  return out;
}

}  // namespace persrm
