#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "gateway.hpp"
#include "templates.hpp"

namespace persrm {

enum class PosStrategy { intra_author, lexical_perturbation };
enum class NegStrategy { cross_author, random_style, confounding };

std::string_view to_string(PosStrategy s);
std::string_view to_string(NegStrategy s);
std::optional<PosStrategy> parse_pos_strategy(std::string_view s);
std::optional<NegStrategy> parse_neg_strategy(std::string_view s);

struct WordDiff {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
};

// Word-level alignment between two texts: minimum edit count, ties resolved toward
// substitutions over insertion/deletion pairs.
WordDiff word_alignment_diff(std::string_view before, std::string_view after);

struct PerturbationBounds {
  std::size_t min_words = 20;
  std::size_t min_substitutions = 1;
  std::size_t max_substitutions = 6;
  std::size_t max_abs_word_delta = 2;
};

struct PerturbationRecord {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  long word_delta = 0;
  int attempts = 0;
  bool accepted = false;
  std::string reason;  // empty when accepted
};

json to_json(const PerturbationRecord& r);

PerturbationRecord verify_perturbation(std::string_view original, std::string_view candidate,
                                       const PerturbationBounds& bounds = {});

struct PreferencePair {
  std::string id;
  std::string query;                   // x
  std::vector<std::string> exemplars;  // e, at least one
  std::string positive;                // y+
  std::string negative;                // y-
  PosStrategy pos_strategy = PosStrategy::intra_author;
  NegStrategy neg_strategy = NegStrategy::cross_author;
  std::string author_id;
  Split split = Split::train;
  CorpusLabel corpus = CorpusLabel::custom;
  // Provenance (Document::key values). negative_doc is empty for generated negatives.
  std::vector<std::string> exemplar_docs;
  std::string positive_doc;
  std::string negative_doc;
  bool truncated = false;
  std::optional<PerturbationRecord> perturbation;
};

json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const json& j);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);
std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs);

struct StrategyMix {
  // weights[pos][neg], indexed by the enum values.
  std::array<std::array<double, 3>, 2> weights{{{1, 1, 1}, {1, 1, 1}}};
  int pairs_per_author = 1;
  std::uint64_t seed = 0;

  void validate() const;
  double weight(PosStrategy p, NegStrategy n) const {
    return weights[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)];
  }
};

std::pair<PosStrategy, NegStrategy> sample_cell(const StrategyMix& mix, Rng& rng);

struct GenerationOptions {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
};

// ---------------- strategies ----------------

// Another document by the same author in the query document's partition. Throws IneligibleError
// when the author has a single document there.
const Document& intra_author_positive(const SplitIndex& index, std::string_view author_id,
                                      std::string_view query_doc_key, std::uint64_t seed);

// A document by a different author from the same partition as `author_id`'s documents.
const Document& cross_author_negative(const SplitIndex& index, Split split, std::string_view author_id,
                                      std::uint64_t seed);

struct PerturbationResult {
  std::string text;  // empty when rejected
  PerturbationRecord record;
};

// Renders the minor-replacement prompt, verifies the rewrite mechanically and regenerates once.
PerturbationResult lexical_perturbation(std::string_view exemplar, const Gateway& gateway,
                                        const PromptSet& prompts = PromptSet::builtin(),
                                        const GenerationOptions& gen = {}, const PerturbationBounds& bounds = {});

PromptRequest random_style_request(std::string_view query, const PromptSet& prompts, const GenerationOptions& gen);
PromptRequest confounding_request(std::string_view query, const std::vector<std::string>& exemplars,
                                  const PromptSet& prompts, const GenerationOptions& gen);
PromptRequest perturbation_request(std::string_view text, const PromptSet& prompts, const GenerationOptions& gen);

std::string random_style_negative(std::string_view query, const Gateway& gateway,
                                  const PromptSet& prompts = PromptSet::builtin(), const GenerationOptions& gen = {});
std::string confounding_negative(std::string_view query, const std::vector<std::string>& exemplars,
                                 const Gateway& gateway, const PromptSet& prompts = PromptSet::builtin(),
                                 const GenerationOptions& gen = {});

// ---------------- build ----------------

struct AugmentOptions {
  StrategyMix mix;
  std::vector<Split> splits{Split::train};
  int exemplar_count = 1;
  std::size_t word_cap = 512;
  std::size_t max_pairs = 0;  // 0 = unlimited
  bool confounding_same_exemplar = true;
  int parallelism = 1;
  GenerationOptions gen;
  PerturbationBounds bounds;
  PromptSet prompts = PromptSet::builtin();
};

struct PairFailure {
  std::string pair_id;
  std::string reason;
};

struct BuildReport {
  std::size_t eligible_authors = 0;
  std::size_t ineligible_authors = 0;
  std::size_t planned = 0;
  std::size_t emitted = 0;
  std::map<std::string, std::size_t> per_cell;  // "pos/neg" -> emitted pairs
  std::map<std::string, std::size_t> rejections;
  std::vector<PairFailure> failures;
};

json to_json(const BuildReport& r);

struct BuildResult {
  std::vector<PreferencePair> pairs;
  BuildReport report;
};

BuildResult build_pairs(const SplitIndex& index, const AugmentOptions& options, const Gateway& gateway);

}  // namespace persrm
