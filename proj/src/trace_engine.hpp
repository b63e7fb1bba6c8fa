#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "augment.hpp"
#include "corpus.hpp"
#include "gateway.hpp"
#include "templates.hpp"

namespace persrm {

// Which of y+/y- was presented as Response A.
enum class Order { pos_first, neg_first };
enum class OrderPolicy { pos_first, neg_first, seeded_random };

std::string_view to_string(Order o);
std::string_view to_string(OrderPolicy p);
std::optional<Order> parse_order(std::string_view s);
std::optional<OrderPolicy> parse_order_policy(std::string_view s);

// seeded_random flips a coin keyed on (seed, pair_id), so the choice is stable per pair.
Order resolve_order(OrderPolicy policy, std::uint64_t seed, std::string_view pair_id);

struct ScoreRange {
  int min = 1;
  int max = 10;
};

struct Evaluation {
  std::string criteria;
  std::string trace;
  int r_plus = 0;
  int r_minus = 0;
  std::string raw;
};

enum class FormatFailure { missing_section, section_order, score_parse, score_count, score_range, duplicate_section };

std::string_view to_string(FormatFailure f);
std::optional<FormatFailure> parse_format_failure(std::string_view s);

struct FormatVerdict {
  bool valid = false;
  std::optional<FormatFailure> failure_reason;
};

struct ParseOutcome {
  FormatVerdict verdict;
  std::optional<Evaluation> evaluation;  // set iff verdict.valid
};

// Total over arbitrary bytes. Valid iff <criteria>, <eval>, <scores> each appear exactly once in
// that order and <scores> holds exactly one [[a,b]] within `range`; failures report the first
// applicable reason in FormatFailure declaration order. Scores come back mapped through `order`.
ParseOutcome parse_evaluation(std::string_view raw, Order order = Order::pos_first, ScoreRange range = {});

// Canonical rendering of an evaluation; scores are placed in presentation order.
std::string serialize_evaluation(const Evaluation& e, Order order);

// ---------------- judge prompts ----------------

// Query plus `Exemplar k:` blocks separated by blank lines.
std::string render_judge_context(std::string_view query, const std::vector<std::string>& exemplars);

struct RenderedJudgePrompt {
  std::string prompt;
  Order order = Order::pos_first;
  std::vector<std::string> exemplars;
};

// Fills the reasoning-trace template. When the pair carries fewer than `exemplar_count` exemplars,
// the remainder comes from the author's documents in `pool` (excluding the positive); throws
// IneligibleError naming the author when there are not enough.
RenderedJudgePrompt render_judge_prompt(const PreferencePair& pair, int exemplar_count, Order order,
                                        const SplitIndex* pool = nullptr,
                                        const PromptSet& prompts = PromptSet::builtin(), std::size_t word_cap = 512);

struct JudgeSlots {
  std::string context;
  std::string response_a;
  std::string response_b;
};

std::optional<JudgeSlots> parse_judge_prompt(std::string_view prompt, const PromptSet& prompts = PromptSet::builtin());

struct TraceOptions {
  int exemplar_count = 1;
  OrderPolicy order_policy = OrderPolicy::seeded_random;
  std::uint64_t seed = 0;
  ScoreRange range;
  GenerationOptions gen;
  std::size_t word_cap = 512;
  int parallelism = 1;
  PromptSet prompts = PromptSet::builtin();
};

PromptRequest judge_request(const RenderedJudgePrompt& rendered, const GenerationOptions& gen, std::string tag = "trace");

// Raw completion for one pair; no parsing.
std::string generate_trace(const PreferencePair& pair, const Gateway& gateway, const TraceOptions& options = {},
                           const SplitIndex* pool = nullptr);

struct TraceRecord {
  std::string pair_id;
  Order order = Order::pos_first;
  FormatVerdict verdict;
  std::optional<Evaluation> evaluation;
  std::string raw;
  std::string error;  // gateway failure, if any
};

json to_json(const TraceRecord& r);
TraceRecord trace_record_from_json(const json& j);
std::vector<TraceRecord> load_trace_records(const std::filesystem::path& path);
std::string trace_records_to_jsonl(const std::vector<TraceRecord>& records);

// Renders, generates (bounded-parallel) and parses one record per pair, in input order.
std::vector<TraceRecord> generate_traces(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                                         const TraceOptions& options, const SplitIndex* pool = nullptr);

struct FilterReport {
  std::size_t kept = 0;
  std::size_t tie = 0;
  std::size_t inverted = 0;
  std::size_t invalid = 0;  // unparsed records handed to the filter
};

json to_json(const FilterReport& r);

struct FilterResult {
  std::vector<TraceRecord> kept;
  FilterReport report;
};

// Keeps records with r_plus > r_minus.
FilterResult faithfulness_filter(const std::vector<TraceRecord>& records);

}  // namespace persrm
