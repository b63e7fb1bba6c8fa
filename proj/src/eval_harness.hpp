#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "augment.hpp"
#include "trace_engine.hpp"

namespace persrm {

enum class Outcome { correct, incorrect, tie, format_failure };
std::string_view to_string(Outcome o);

struct EvalRecord {
  std::string pair_id;
  std::string slice;  // CCAT | CMCC | custom | cross_domain
  int exemplar_count = 1;
  double r_plus = 0.0;
  double r_minus = 0.0;
  Outcome outcome = Outcome::format_failure;
  std::string detail;  // failure reason, if any
};

json to_json(const EvalRecord& r);

// cross_domain pairs form their own slice; everything else is sliced by corpus.
std::string slice_of(const PreferencePair& pair);

Outcome compare_scores(double r_plus, double r_minus);

struct SliceStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t tie = 0;
  std::size_t format_failure = 0;

  // Ties and format failures count against accuracy.
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  double tie_rate() const { return n ? static_cast<double>(tie) / static_cast<double>(n) : 0.0; }
  double format_failure_rate() const { return n ? static_cast<double>(format_failure) / static_cast<double>(n) : 0.0; }
};

enum class EvalMode { generative, scalar };
enum class EvalOrderPolicy { single, both_orders_mean };

std::string_view to_string(EvalMode m);
std::string_view to_string(EvalOrderPolicy p);
std::optional<EvalMode> parse_eval_mode(std::string_view s);
std::optional<EvalOrderPolicy> parse_eval_order_policy(std::string_view s);

struct AccuracyReport {
  std::map<std::string, SliceStats> slices;
  int exemplar_count = 1;
  EvalMode mode = EvalMode::generative;
  EvalOrderPolicy order_policy = EvalOrderPolicy::single;
  std::string model;
  std::vector<EvalRecord> records;  // input order
};

AccuracyReport aggregate(std::vector<EvalRecord> records, int exemplar_count, EvalMode mode,
                         EvalOrderPolicy order_policy, std::string model);

json to_json(const AccuracyReport& r);
// Rows are models, columns CCAT / CMCC / Cr. Do.
std::string format_table(const AccuracyReport& r);

struct EvalOptions {
  int exemplar_count = 1;
  EvalOrderPolicy order_policy = EvalOrderPolicy::single;
  OrderPolicy single_order = OrderPolicy::seeded_random;  // A/B assignment under `single`
  Order base_order = Order::pos_first;                     // issued first under both_orders_mean
  std::uint64_t seed = 0;
  ScoreRange range;
  GenerationOptions gen;
  std::size_t word_cap = 512;
  int parallelism = 1;
  PromptSet prompts = PromptSet::builtin();
};

AccuracyReport eval_generative(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                               const EvalOptions& options = {}, const SplitIndex* pool = nullptr);

// Exemplars followed by the query form the context of each single-response call.
std::string scalar_prompt(const PreferencePair& pair, const std::vector<std::string>& exemplars,
                          std::string_view response, const PromptSet& prompts = PromptSet::builtin());

// A reply that is exactly one finite number, surrounding whitespace aside.
std::optional<double> parse_single_number(std::string_view reply);

AccuracyReport eval_scalar(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                           const EvalOptions& options = {}, const SplitIndex* pool = nullptr);

// ---------------- style-similarity audit ----------------

enum class JudgeCategory { intra_author, minor_replacement, style_mimicking, cross_author, style_randomization };

std::string_view to_string(JudgeCategory c);
std::optional<JudgeCategory> parse_judge_category(std::string_view s);
// Expected ordering of the category means, most similar first.
const std::vector<JudgeCategory>& judge_category_order();

struct JudgeItem {
  std::string id;
  JudgeCategory category = JudgeCategory::intra_author;
  std::string response;
  std::string exemplar;
};

// Two items per pair: positive vs exemplar and negative vs exemplar, labelled by strategy.
std::vector<JudgeItem> judge_items_from_pairs(const std::vector<PreferencePair>& pairs);

// Number in [0, 10] and nothing else.
std::optional<double> parse_similarity_reply(std::string_view reply);

struct CategoryStats {
  std::size_t n = 0;
  std::size_t dropped = 0;
  double sum = 0.0;
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

struct JudgeReport {
  std::map<JudgeCategory, CategoryStats> categories;
  std::size_t retried = 0;
  // Means strictly decrease along judge_category_order() over the categories that were scored.
  bool ordering_holds() const;
};

json to_json(const JudgeReport& r);
std::string format_table(const JudgeReport& r);

struct JudgeOptions {
  GenerationOptions gen;
  int parallelism = 1;
  PromptSet prompts = PromptSet::builtin();
};

// Replies failing parse_similarity_reply are re-requested once (tag suffix ".retry"), then dropped.
JudgeReport judge_style_similarity(const std::vector<JudgeItem>& items, const Gateway& gateway,
                                   const JudgeOptions& options = {});

}  // namespace persrm
