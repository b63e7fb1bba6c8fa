#include "augment.hpp"

#include <algorithm>
#include <cstdlib>

namespace persrm {

namespace {

constexpr std::array<std::string_view, 2> kPos{"intra_author", "lexical_perturbation"};
constexpr std::array<std::string_view, 3> kNeg{"cross_author", "random_style", "confounding"};

std::string cell_name(PosStrategy p, NegStrategy n) {
  return std::string(to_string(p)) + "/" + std::string(to_string(n));
}

}  // namespace

std::string_view to_string(PosStrategy s) { return kPos[static_cast<std::size_t>(s)]; }
std::string_view to_string(NegStrategy s) { return kNeg[static_cast<std::size_t>(s)]; }

std::optional<PosStrategy> parse_pos_strategy(std::string_view s) {
  for (std::size_t i = 0; i < kPos.size(); ++i)
    if (kPos[i] == s) return static_cast<PosStrategy>(i);
  return std::nullopt;
}

std::optional<NegStrategy> parse_neg_strategy(std::string_view s) {
  for (std::size_t i = 0; i < kNeg.size(); ++i)
    if (kNeg[i] == s) return static_cast<NegStrategy>(i);
  return std::nullopt;
}

// ---------------- word alignment ----------------

WordDiff word_alignment_diff(std::string_view before, std::string_view after) {
  auto a = split_words(before);
  auto b = split_words(after);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Each cell holds (edits, indels); lexicographic minimum. Substitutions = edits - indels.
  using Cell = std::pair<std::size_t, std::size_t>;
  std::vector<Cell> prev(m + 1);
  std::vector<Cell> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, j};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, i};
    for (std::size_t j = 1; j <= m; ++j) {
      Cell diag = prev[j - 1];
      if (a[i - 1] != b[j - 1]) diag.first += 1;
      Cell up{prev[j].first + 1, prev[j].second + 1};
      Cell left{cur[j - 1].first + 1, cur[j - 1].second + 1};
      cur[j] = std::min({diag, up, left});
    }
    std::swap(prev, cur);
  }
  auto [edits, indels] = prev[m];
  WordDiff d;
  d.substitutions = edits - indels;
  // insertions - deletions == m - n
  long diff = static_cast<long>(m) - static_cast<long>(n);
  d.insertions = static_cast<std::size_t>((static_cast<long>(indels) + diff) / 2);
  d.deletions = indels - d.insertions;
  return d;
}

json to_json(const PerturbationRecord& r) {
  json j{{"substitutions", r.substitutions}, {"insertions", r.insertions}, {"deletions", r.deletions},
         {"word_delta", r.word_delta},       {"attempts", r.attempts},     {"accepted", r.accepted}};
  if (!r.reason.empty()) j["reason"] = r.reason;
  return j;
}

PerturbationRecord verify_perturbation(std::string_view original, std::string_view candidate,
                                       const PerturbationBounds& bounds) {
  PerturbationRecord r;
  WordDiff d = word_alignment_diff(original, candidate);
  r.substitutions = d.substitutions;
  r.insertions = d.insertions;
  r.deletions = d.deletions;
  r.word_delta = static_cast<long>(word_count(candidate)) - static_cast<long>(word_count(original));
  if (r.substitutions < bounds.min_substitutions || r.substitutions > bounds.max_substitutions) {
    r.reason = "substitutions " + std::to_string(r.substitutions) + " outside [" +
               std::to_string(bounds.min_substitutions) + "," + std::to_string(bounds.max_substitutions) + "]";
  } else if (static_cast<std::size_t>(std::labs(r.word_delta)) > bounds.max_abs_word_delta) {
    r.reason = "word-count delta " + std::to_string(r.word_delta) + " exceeds " + std::to_string(bounds.max_abs_word_delta);
  }
  r.accepted = r.reason.empty();
  return r;
}

// ---------------- pair serialization ----------------

json to_json(const PreferencePair& p) {
  json j{{"id", p.id},
         {"query", p.query},
         {"exemplars", p.exemplars},
         {"positive", p.positive},
         {"negative", p.negative},
         {"pos_strategy", to_string(p.pos_strategy)},
         {"neg_strategy", to_string(p.neg_strategy)},
         {"author_id", p.author_id},
         {"split", to_string(p.split)},
         {"corpus", to_string(p.corpus)},
         {"exemplar_docs", p.exemplar_docs},
         {"positive_doc", p.positive_doc},
         {"negative_doc", p.negative_doc},
         {"truncated", p.truncated}};
  if (p.perturbation) j["perturbation"] = to_json(*p.perturbation);
  return j;
}

PreferencePair pair_from_json(const json& j) {
  try {
    PreferencePair p;
    p.id = j.at("id").get<std::string>();
    p.query = j.at("query").get<std::string>();
    p.exemplars = j.at("exemplars").get<std::vector<std::string>>();
    p.positive = j.at("positive").get<std::string>();
    p.negative = j.at("negative").get<std::string>();
    auto pos = parse_pos_strategy(j.at("pos_strategy").get<std::string>());
    auto neg = parse_neg_strategy(j.at("neg_strategy").get<std::string>());
    auto split = parse_split(j.at("split").get<std::string>());
    auto corpus = parse_corpus_label(j.value("corpus", "custom"));
    if (!pos || !neg || !split || !corpus) throw DataError("pair " + p.id + ": unknown strategy, split or corpus label");
    p.pos_strategy = *pos;
    p.neg_strategy = *neg;
    p.split = *split;
    p.corpus = *corpus;
    p.author_id = j.at("author_id").get<std::string>();
    p.exemplar_docs = j.value("exemplar_docs", std::vector<std::string>{});
    p.positive_doc = j.value("positive_doc", "");
    p.negative_doc = j.value("negative_doc", "");
    p.truncated = j.value("truncated", false);
    if (j.contains("perturbation")) {
      const auto& r = j.at("perturbation");
      PerturbationRecord rec;
      rec.substitutions = r.at("substitutions").get<std::size_t>();
      rec.insertions = r.at("insertions").get<std::size_t>();
      rec.deletions = r.at("deletions").get<std::size_t>();
      rec.word_delta = r.at("word_delta").get<long>();
      rec.attempts = r.at("attempts").get<int>();
      rec.accepted = r.at("accepted").get<bool>();
      rec.reason = r.value("reason", "");
      p.perturbation = rec;
    }
    if (p.exemplars.empty()) throw DataError("pair " + p.id + ": no exemplars");
    if (p.positive == p.negative) throw DataError("pair " + p.id + ": positive equals negative");
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed preference pair: ") + e.what());
  }
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> pairs;
  for (const auto& row : read_jsonl(path)) pairs.push_back(pair_from_json(row));
  return pairs;
}

std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs) {
  std::vector<json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(to_json(p));
  return to_jsonl(rows);
}

// ---------------- mix ----------------

void StrategyMix::validate() const {
  double total = 0;
  for (const auto& row : weights)
    for (double w : row) {
      if (!(w >= 0.0)) throw ConfigError("strategy weights must be non-negative");
      total += w;
    }
  if (!(total > 0.0)) throw ConfigError("strategy weights must sum to a positive value");
  if (pairs_per_author < 1) throw ConfigError("pairs_per_author must be >= 1");
}

std::pair<PosStrategy, NegStrategy> sample_cell(const StrategyMix& mix, Rng& rng) {
  double total = 0;
  for (const auto& row : mix.weights)
    for (double w : row) total += w;
  double u = rng.unit() * total;
  std::pair<PosStrategy, NegStrategy> last{PosStrategy::intra_author, NegStrategy::cross_author};
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t n = 0; n < 3; ++n) {
      double w = mix.weights[p][n];
      if (w <= 0) continue;
      last = {static_cast<PosStrategy>(p), static_cast<NegStrategy>(n)};
      if (u < w) return last;
      u -= w;
    }
  }
  return last;  // rounding at the upper edge
}

// ---------------- strategies ----------------

const Document& intra_author_positive(const SplitIndex& index, std::string_view author_id,
                                      std::string_view query_doc_key, std::uint64_t seed) {
  const Document* query = index.find(query_doc_key);
  if (!query || query->author_id != author_id) {
    throw DataError("query document " + std::string(query_doc_key) + " does not belong to author " + std::string(author_id));
  }
  auto split = index.split_of_doc(*query);
  if (!split) throw IneligibleError("query document " + std::string(query_doc_key) + " is not in any split");
  std::vector<const Document*> candidates;
  for (const Document* d : index.docs_of(*split, author_id))
    if (d->key() != query_doc_key) candidates.push_back(d);
  if (candidates.empty()) {
    throw IneligibleError("author " + std::string(author_id) + " has a single document in split " +
                          std::string(to_string(*split)) + "; intra-author retrieval needs two");
  }
  Rng rng(seed);
  return *candidates[rng.below(candidates.size())];
}

const Document& cross_author_negative(const SplitIndex& index, Split split, std::string_view author_id,
                                      std::uint64_t seed) {
  std::vector<const Document*> pool;
  for (const Document* d : index.docs_in(split))
    if (d->author_id != author_id) pool.push_back(d);
  if (pool.empty()) {
    throw IneligibleError("split " + std::string(to_string(split)) + " has no author other than " + std::string(author_id));
  }
  Rng rng(seed);
  return *pool[rng.below(pool.size())];
}

namespace {

PromptRequest make_request(std::string user, std::string tag, const GenerationOptions& gen) {
  PromptRequest r;
  r.user = std::move(user);
  r.tag = std::move(tag);
  r.temperature = gen.temperature;
  r.top_p = gen.top_p;
  r.max_tokens = gen.max_tokens;
  return r;
}

std::string first_text(const CompletionResult& r) { return r.texts.empty() ? std::string() : std::string(trim(r.texts[0])); }

}  // namespace

PromptRequest random_style_request(std::string_view query, const PromptSet& prompts, const GenerationOptions& gen) {
  if (is_blank(query)) throw DataError("random-style negative requires a non-empty query");
  return make_request(prompts.random_style.render({{"problem", std::string(query)}}), "augment.random_style", gen);
}

PromptRequest confounding_request(std::string_view query, const std::vector<std::string>& exemplars,
                                  const PromptSet& prompts, const GenerationOptions& gen) {
  if (exemplars.empty()) throw DataError("confounding negative requires at least one exemplar");
  return make_request(
      prompts.style_mimicking.render({{"problem", std::string(query)}, {"context", join(exemplars, "\n\n")}}),
      "augment.confounding", gen);
}

PromptRequest perturbation_request(std::string_view text, const PromptSet& prompts, const GenerationOptions& gen) {
  return make_request(prompts.minor_replacement.render({{"paragraph", std::string(text)}}), "augment.perturb", gen);
}

std::string random_style_negative(std::string_view query, const Gateway& gateway, const PromptSet& prompts,
                                  const GenerationOptions& gen) {
  return first_text(gateway.complete(random_style_request(query, prompts, gen)));
}

std::string confounding_negative(std::string_view query, const std::vector<std::string>& exemplars,
                                 const Gateway& gateway, const PromptSet& prompts, const GenerationOptions& gen) {
  return first_text(gateway.complete(confounding_request(query, exemplars, prompts, gen)));
}

PerturbationResult lexical_perturbation(std::string_view exemplar, const Gateway& gateway, const PromptSet& prompts,
                                        const GenerationOptions& gen, const PerturbationBounds& bounds) {
  if (word_count(exemplar) < bounds.min_words) {
    throw IneligibleError("lexical perturbation needs at least " + std::to_string(bounds.min_words) + " words, got " +
                          std::to_string(word_count(exemplar)));
  }
  PromptRequest request = perturbation_request(exemplar, prompts, gen);
  PerturbationResult out;
  for (int attempt = 1; attempt <= 2; ++attempt) {
    if (attempt == 2) request.tag = "augment.perturb.retry";
    std::string candidate = first_text(gateway.complete(request));
    out.record = verify_perturbation(exemplar, candidate, bounds);
    out.record.attempts = attempt;
    if (out.record.accepted) {
      out.text = std::move(candidate);
      return out;
    }
  }
  return out;
}

// ---------------- build ----------------

json to_json(const BuildReport& r) {
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"pair_id", f.pair_id}, {"reason", f.reason}});
  return {{"eligible_authors", r.eligible_authors},
          {"ineligible_authors", r.ineligible_authors},
          {"planned", r.planned},
          {"emitted", r.emitted},
          {"per_cell", r.per_cell},
          {"rejections", r.rejections},
          {"failures", failures}};
}

namespace {

struct PairPlan {
  PreferencePair pair;
  std::string positive_source;  // text handed to the perturbation prompt
  std::optional<std::size_t> perturb_request;
  std::optional<std::size_t> negative_request;
  std::string failure;
};

std::string reason_key(const std::string& reason) {
  auto colon = reason.find(':');
  return colon == std::string::npos ? reason : reason.substr(0, colon);
}

}  // namespace

BuildResult build_pairs(const SplitIndex& index, const AugmentOptions& options, const Gateway& gateway) {
  options.mix.validate();
  if (options.exemplar_count < 1) throw ConfigError("exemplar_count must be >= 1");
  if (options.word_cap < 1) throw ConfigError("word_cap must be >= 1");

  BuildResult result;
  BuildReport& report = result.report;
  std::vector<PairPlan> plans;

  auto cap = [&](const std::string& text, bool& truncated) {
    Truncated t = truncate_words(text, options.word_cap);
    truncated = truncated || t.truncated;
    return t.text;
  };

  for (Split split : options.splits) {
    std::vector<std::string> eligible;
    for (const auto& author : index.authors_in(split)) {
      // anchor + positive + (exemplar_count - 1) extra exemplars must be distinct documents
      if (index.docs_of(split, author).size() >= static_cast<std::size_t>(options.exemplar_count) + 1) {
        eligible.push_back(author);
      } else {
        ++report.ineligible_authors;
      }
    }
    report.eligible_authors += eligible.size();

    // k-major order spreads a max_pairs cap across authors.
    for (int k = 0; k < options.mix.pairs_per_author; ++k) {
      for (const auto& author : eligible) {
        PairPlan plan;
        PreferencePair& p = plan.pair;
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "%05d", k);
        p.id = std::string(to_string(split)) + "-" + author + "-" + suffix;
        p.author_id = author;
        p.split = split;

        Rng rng(derive_seed(options.mix.seed, std::string(to_string(split)) + "/" + author, static_cast<std::uint64_t>(k)));
        auto [pos, neg] = sample_cell(options.mix, rng);
        p.pos_strategy = pos;
        p.neg_strategy = neg;

        auto docs = index.docs_of(split, author);
        const Document& anchor = *docs[rng.below(docs.size())];
        const Document& positive = intra_author_positive(index, author, anchor.key(), rng.next());
        p.corpus = anchor.corpus;
        p.query = anchor.query;
        p.positive_doc = positive.key();

        std::vector<const Document*> exemplar_docs{&anchor};
        std::vector<const Document*> rest;
        for (const Document* d : docs)
          if (d != &anchor && d != &positive) rest.push_back(d);
        rng.shuffle(rest);
        for (int e = 1; e < options.exemplar_count; ++e) exemplar_docs.push_back(rest[static_cast<std::size_t>(e - 1)]);
        for (const Document* d : exemplar_docs) {
          p.exemplar_docs.push_back(d->key());
          p.exemplars.push_back(cap(d->body, p.truncated));
        }

        plan.positive_source = cap(positive.body, p.truncated);
        if (pos == PosStrategy::intra_author) {
          p.positive = plan.positive_source;
        } else if (word_count(plan.positive_source) < options.bounds.min_words) {
          plan.failure = "perturbation_too_short: positive source has " +
                         std::to_string(word_count(plan.positive_source)) + " words";
        }

        if (neg == NegStrategy::cross_author) {
          try {
            const Document& other = cross_author_negative(index, split, author, rng.next());
            p.negative_doc = other.key();
            p.negative = cap(other.body, p.truncated);
          } catch (const IneligibleError& e) {
            plan.failure = std::string("cross_author_ineligible: ") + e.what();
          }
        }
        plans.push_back(std::move(plan));
      }
    }
  }

  if (options.max_pairs > 0 && plans.size() > options.max_pairs) plans.resize(options.max_pairs);
  report.planned = plans.size();

  // One batch for every generated text.
  std::vector<PromptRequest> requests;
  for (auto& plan : plans) {
    if (!plan.failure.empty()) continue;
    PreferencePair& p = plan.pair;
    if (p.pos_strategy == PosStrategy::lexical_perturbation) {
      plan.perturb_request = requests.size();
      requests.push_back(perturbation_request(plan.positive_source, options.prompts, options.gen));
    }
    if (p.neg_strategy == NegStrategy::random_style) {
      plan.negative_request = requests.size();
      requests.push_back(random_style_request(p.query, options.prompts, options.gen));
    } else if (p.neg_strategy == NegStrategy::confounding) {
      std::vector<std::string> context = p.exemplars;
      if (!options.confounding_same_exemplar) {
        // Disjoint exemplar: the first author document not shown to the reward model, if any.
        auto docs = index.docs_of(p.split, p.author_id);
        for (const Document* d : docs) {
          const std::string key = d->key();
          bool used = key == p.positive_doc ||
                      std::find(p.exemplar_docs.begin(), p.exemplar_docs.end(), key) != p.exemplar_docs.end();
          if (!used) {
            context = {truncate_words(d->body, options.word_cap).text};
            break;
          }
        }
      }
      plan.negative_request = requests.size();
      requests.push_back(confounding_request(p.query, context, options.prompts, options.gen));
    }
  }
  auto responses = gateway.complete_batch(requests, options.parallelism);

  // Perturbations failing verification get one regeneration.
  std::vector<PromptRequest> retries;
  std::vector<std::size_t> retry_owner;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    auto& plan = plans[i];
    if (!plan.perturb_request) continue;
    const BatchItem& item = responses[*plan.perturb_request];
    if (!item.ok()) continue;
    std::string candidate = first_text(*item.result);
    PerturbationRecord rec = verify_perturbation(plan.positive_source, candidate, options.bounds);
    rec.attempts = 1;
    plan.pair.perturbation = rec;
    if (rec.accepted) {
      plan.pair.positive = candidate;
    } else {
      PromptRequest retry = requests[*plan.perturb_request];
      retry.tag = "augment.perturb.retry";
      retries.push_back(std::move(retry));
      retry_owner.push_back(i);
    }
  }
  auto retry_responses = gateway.complete_batch(retries, options.parallelism);
  for (std::size_t r = 0; r < retries.size(); ++r) {
    auto& plan = plans[retry_owner[r]];
    const BatchItem& item = retry_responses[r];
    if (!item.ok()) {
      plan.failure = "gateway_error: " + item.error;
      continue;
    }
    std::string candidate = first_text(*item.result);
    PerturbationRecord rec = verify_perturbation(plan.positive_source, candidate, options.bounds);
    rec.attempts = 2;
    plan.pair.perturbation = rec;
    if (rec.accepted) {
      plan.pair.positive = candidate;
    } else {
      plan.failure = "perturbation_rejected: " + rec.reason;
    }
  }

  for (auto& plan : plans) {
    PreferencePair& p = plan.pair;
    if (plan.failure.empty() && plan.perturb_request) {
      const BatchItem& item = responses[*plan.perturb_request];
      if (!item.ok()) plan.failure = "gateway_error: " + item.error;
    }
    if (plan.failure.empty() && plan.negative_request) {
      const BatchItem& item = responses[*plan.negative_request];
      if (!item.ok()) {
        plan.failure = "gateway_error: " + item.error;
      } else {
        p.negative = cap(first_text(*item.result), p.truncated);
      }
    }
    if (plan.failure.empty()) {
      if (is_blank(p.positive) || is_blank(p.negative)) {
        plan.failure = "empty_response: generated text is empty";
      } else if (p.positive == p.negative) {
        plan.failure = "positive_equals_negative: identical texts";
      } else {
        for (const Document* d : index.docs_of(p.split, p.author_id)) {
          if (truncate_words(d->body, options.word_cap).text == p.negative || d->body == p.negative) {
            plan.failure = "negative_matches_author_text: " + d->key();
            break;
          }
        }
      }
    }
    if (!plan.failure.empty()) {
      ++report.rejections[reason_key(plan.failure)];
      report.failures.push_back({p.id, plan.failure});
      continue;
    }
    ++report.per_cell[cell_name(p.pos_strategy, p.neg_strategy)];
    result.pairs.push_back(std::move(p));
  }
  report.emitted = result.pairs.size();
  return result;
}

}  // namespace persrm
