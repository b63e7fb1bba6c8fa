#include "eval_harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <regex>

namespace persrm {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::correct: return "correct";
    case Outcome::incorrect: return "incorrect";
    case Outcome::tie: return "tie";
    case Outcome::format_failure: return "format_failure";
  }
  return "format_failure";
}

json to_json(const EvalRecord& r) {
  json j{{"pair_id", r.pair_id},
         {"slice", r.slice},
         {"exemplar_count", r.exemplar_count},
         {"outcome", to_string(r.outcome)}};
  if (r.outcome == Outcome::format_failure) {
    j["r_plus"] = nullptr;
    j["r_minus"] = nullptr;
    j["detail"] = r.detail;
  } else {
    j["r_plus"] = r.r_plus;
    j["r_minus"] = r.r_minus;
  }
  return j;
}

std::string slice_of(const PreferencePair& pair) {
  if (pair.split == Split::cross_domain) return "cross_domain";
  return std::string(to_string(pair.corpus));
}

Outcome compare_scores(double r_plus, double r_minus) {
  if (r_plus > r_minus) return Outcome::correct;
  if (r_plus == r_minus) return Outcome::tie;
  return Outcome::incorrect;
}

std::string_view to_string(EvalMode m) { return m == EvalMode::generative ? "generative" : "scalar"; }
std::string_view to_string(EvalOrderPolicy p) {
  return p == EvalOrderPolicy::single ? "single" : "both_orders_mean";
}

std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "generative") return EvalMode::generative;
  if (s == "scalar") return EvalMode::scalar;
  return std::nullopt;
}

std::optional<EvalOrderPolicy> parse_eval_order_policy(std::string_view s) {
  if (s == "single") return EvalOrderPolicy::single;
  if (s == "both_orders_mean") return EvalOrderPolicy::both_orders_mean;
  return std::nullopt;
}

AccuracyReport aggregate(std::vector<EvalRecord> records, int exemplar_count, EvalMode mode,
                         EvalOrderPolicy order_policy, std::string model) {
  AccuracyReport r;
  r.exemplar_count = exemplar_count;
  r.mode = mode;
  r.order_policy = order_policy;
  r.model = std::move(model);
  for (const auto& rec : records) {
    SliceStats& s = r.slices[rec.slice];
    ++s.n;
    switch (rec.outcome) {
      case Outcome::correct: ++s.correct; break;
      case Outcome::incorrect: ++s.incorrect; break;
      case Outcome::tie: ++s.tie; break;
      case Outcome::format_failure: ++s.format_failure; break;
    }
  }
  r.records = std::move(records);
  return r;
}

json to_json(const AccuracyReport& r) {
  json slices = json::object();
  for (const auto& [name, s] : r.slices) {
    slices[name] = json{{"accuracy", s.accuracy()},
                        {"n", s.n},
                        {"correct", s.correct},
                        {"incorrect", s.incorrect},
                        {"tie", s.tie},
                        {"format_failure", s.format_failure},
                        {"tie_rate", s.tie_rate()},
                        {"format_failure_rate", s.format_failure_rate()},
                        {"exemplar_count", r.exemplar_count}};
  }
  return json{{"slices", slices},
              {"exemplar_count", r.exemplar_count},
              {"order_policy", to_string(r.order_policy)},
              {"mode", to_string(r.mode)},
              {"model", r.model},
              {"format_failure_policy", "counted_incorrect"}};
}

std::string format_table(const AccuracyReport& r) {
  auto cell = [&](const char* slice) {
    auto it = r.slices.find(slice);
    if (it == r.slices.end() || it->second.n == 0) return std::string("-");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * it->second.accuracy());
    return std::string(buf);
  };
  auto count = [&](const char* slice) {
    auto it = r.slices.find(slice);
    return it == r.slices.end() ? std::string("0") : std::to_string(it->second.n);
  };
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-28s %6s %8s %8s %8s\n", "Model", "# Ex.", "CCAT", "CMCC", "Cr. Do.");
  out += line;
  std::snprintf(line, sizeof line, "%-28s %6d %8s %8s %8s\n", r.model.substr(0, 28).c_str(), r.exemplar_count,
                cell("CCAT").c_str(), cell("CMCC").c_str(), cell("cross_domain").c_str());
  out += line;
  std::snprintf(line, sizeof line, "%-28s %6s %8s %8s %8s\n", "n", "", count("CCAT").c_str(), count("CMCC").c_str(),
                count("cross_domain").c_str());
  out += line;
  for (const auto& [name, s] : r.slices) {
    std::snprintf(line, sizeof line, "%s: tie_rate %.3f, format_failure_rate %.3f\n", name.c_str(), s.tie_rate(),
                  s.format_failure_rate());
    out += line;
  }
  out += "mode " + std::string(to_string(r.mode)) + ", order policy " + std::string(to_string(r.order_policy)) +
         "; ties and format failures count as incorrect\n";
  return out;
}

namespace {

Order flip(Order o) { return o == Order::pos_first ? Order::neg_first : Order::pos_first; }

PromptRequest make_request(std::string user, const GenerationOptions& gen, std::string tag) {
  PromptRequest r;
  r.user = std::move(user);
  r.tag = std::move(tag);
  r.temperature = gen.temperature;
  r.top_p = gen.top_p;
  r.max_tokens = gen.max_tokens;
  return r;
}

std::string first_text(const BatchItem& item) {
  return item.result->texts.empty() ? std::string() : item.result->texts.front();
}

}  // namespace

AccuracyReport eval_generative(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                               const EvalOptions& options, const SplitIndex* pool) {
  const bool both = options.order_policy == EvalOrderPolicy::both_orders_mean;
  const std::size_t per_pair = both ? 2 : 1;
  std::vector<PromptRequest> requests;
  std::vector<Order> orders;
  requests.reserve(pairs.size() * per_pair);
  for (const auto& p : pairs) {
    Order first = both ? options.base_order : resolve_order(options.single_order, options.seed, p.id);
    for (std::size_t k = 0; k < per_pair; ++k) {
      Order o = k == 0 ? first : flip(first);
      auto rendered = render_judge_prompt(p, options.exemplar_count, o, pool, options.prompts, options.word_cap);
      requests.push_back(judge_request(rendered, options.gen, "eval.generative"));
      orders.push_back(o);
    }
  }
  auto items = gateway.complete_batch(requests, options.parallelism);

  std::vector<EvalRecord> records;
  records.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EvalRecord rec;
    rec.pair_id = pairs[i].id;
    rec.slice = slice_of(pairs[i]);
    rec.exemplar_count = options.exemplar_count;
    // Per-response scores keyed by presentation order so the mean does not depend on which
    // order was issued first.
    double plus[2] = {0, 0};
    double minus[2] = {0, 0};
    bool ok = true;
    for (std::size_t k = 0; k < per_pair && ok; ++k) {
      const std::size_t at = i * per_pair + k;
      if (!items[at].ok()) {
        ok = false;
        rec.detail = "gateway: " + items[at].error;
        break;
      }
      auto parsed = parse_evaluation(first_text(items[at]), orders[at], options.range);
      if (!parsed.verdict.valid) {
        ok = false;
        rec.detail = std::string(to_string(*parsed.verdict.failure_reason));
        break;
      }
      const std::size_t slot = orders[at] == Order::pos_first ? 0 : 1;
      plus[slot] = parsed.evaluation->r_plus;
      minus[slot] = parsed.evaluation->r_minus;
    }
    if (ok) {
      if (both) {
        rec.r_plus = (plus[0] + plus[1]) / 2.0;
        rec.r_minus = (minus[0] + minus[1]) / 2.0;
      } else {
        const std::size_t slot = orders[i] == Order::pos_first ? 0 : 1;
        rec.r_plus = plus[slot];
        rec.r_minus = minus[slot];
      }
      rec.outcome = compare_scores(rec.r_plus, rec.r_minus);
    }
    records.push_back(std::move(rec));
  }
  return aggregate(std::move(records), options.exemplar_count, EvalMode::generative, options.order_policy,
                   gateway.backend().id());
}

std::string scalar_prompt(const PreferencePair& pair, const std::vector<std::string>& exemplars,
                          std::string_view response, const PromptSet& prompts) {
  std::string context;
  for (std::size_t k = 0; k < exemplars.size(); ++k) {
    if (k) context += "\n\n";
    context += "Exemplar " + std::to_string(k + 1) + ":\n" + exemplars[k];
  }
  return prompts.scalar_score.render({{"context", context}, {"query", pair.query}, {"response", std::string(response)}});
}

std::optional<double> parse_single_number(std::string_view reply) {
  std::string s(trim(reply));
  if (s.empty()) return std::nullopt;
  static const std::regex number(R"([+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)");
  if (!std::regex_match(s, number)) return std::nullopt;
  double v = std::strtod(s.c_str(), nullptr);
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

AccuracyReport eval_scalar(const std::vector<PreferencePair>& pairs, const Gateway& gateway,
                           const EvalOptions& options, const SplitIndex* pool) {
  std::vector<PromptRequest> requests;
  requests.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    // Reuse the judge renderer for exemplar selection so both modes see the same exemplars.
    auto rendered = render_judge_prompt(p, options.exemplar_count, Order::pos_first, pool, options.prompts,
                                        options.word_cap);
    requests.push_back(make_request(scalar_prompt(p, rendered.exemplars, p.positive, options.prompts), options.gen,
                                    "eval.scalar"));
    requests.push_back(make_request(scalar_prompt(p, rendered.exemplars, p.negative, options.prompts), options.gen,
                                    "eval.scalar"));
  }
  auto items = gateway.complete_batch(requests, options.parallelism);

  std::vector<EvalRecord> records;
  records.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EvalRecord rec;
    rec.pair_id = pairs[i].id;
    rec.slice = slice_of(pairs[i]);
    rec.exemplar_count = options.exemplar_count;
    std::optional<double> scores[2];
    for (std::size_t k = 0; k < 2; ++k) {
      const BatchItem& item = items[2 * i + k];
      if (!item.ok()) {
        rec.detail = "gateway: " + item.error;
        break;
      }
      scores[k] = parse_single_number(first_text(item));
      if (!scores[k]) {
        rec.detail = "score_parse";
        break;
      }
    }
    if (scores[0] && scores[1]) {
      rec.r_plus = *scores[0];
      rec.r_minus = *scores[1];
      rec.outcome = compare_scores(rec.r_plus, rec.r_minus);
    }
    records.push_back(std::move(rec));
  }
  return aggregate(std::move(records), options.exemplar_count, EvalMode::scalar, EvalOrderPolicy::single,
                   gateway.backend().id());
}

// ---------------- style-similarity audit ----------------

std::string_view to_string(JudgeCategory c) {
  switch (c) {
    case JudgeCategory::intra_author: return "intra_author";
    case JudgeCategory::minor_replacement: return "minor_replacement";
    case JudgeCategory::style_mimicking: return "style_mimicking";
    case JudgeCategory::cross_author: return "cross_author";
    case JudgeCategory::style_randomization: return "style_randomization";
  }
  return "intra_author";
}

std::optional<JudgeCategory> parse_judge_category(std::string_view s) {
  for (JudgeCategory c : judge_category_order())
    if (to_string(c) == s) return c;
  return std::nullopt;
}

const std::vector<JudgeCategory>& judge_category_order() {
  static const std::vector<JudgeCategory> order{JudgeCategory::intra_author, JudgeCategory::minor_replacement,
                                                JudgeCategory::style_mimicking, JudgeCategory::cross_author,
                                                JudgeCategory::style_randomization};
  return order;
}

std::vector<JudgeItem> judge_items_from_pairs(const std::vector<PreferencePair>& pairs) {
  std::vector<JudgeItem> out;
  for (const auto& p : pairs) {
    if (p.exemplars.empty()) throw DataError("pair " + p.id + " has no exemplar");
    JudgeCategory pos = p.pos_strategy == PosStrategy::intra_author ? JudgeCategory::intra_author
                                                                    : JudgeCategory::minor_replacement;
    JudgeCategory neg = JudgeCategory::cross_author;
    if (p.neg_strategy == NegStrategy::random_style) neg = JudgeCategory::style_randomization;
    if (p.neg_strategy == NegStrategy::confounding) neg = JudgeCategory::style_mimicking;
    out.push_back({p.id + "/positive", pos, p.positive, p.exemplars.front()});
    out.push_back({p.id + "/negative", neg, p.negative, p.exemplars.front()});
  }
  return out;
}

std::optional<double> parse_similarity_reply(std::string_view reply) {
  std::string s(trim(reply));
  static const std::regex number(R"(\d+(\.\d+)?)");
  if (!std::regex_match(s, number)) return std::nullopt;
  double v = std::strtod(s.c_str(), nullptr);
  if (v < 0.0 || v > 10.0) return std::nullopt;
  return v;
}

bool JudgeReport::ordering_holds() const {
  std::optional<double> prev;
  for (JudgeCategory c : judge_category_order()) {
    auto it = categories.find(c);
    if (it == categories.end() || it->second.n == 0) continue;
    double m = it->second.mean();
    if (prev && !(m < *prev)) return false;
    prev = m;
  }
  return true;
}

json to_json(const JudgeReport& r) {
  json cats = json::object();
  for (const auto& [c, s] : r.categories) {
    cats[std::string(to_string(c))] = json{{"mean", s.n ? json(s.mean()) : json(nullptr)}, {"n", s.n}, {"dropped", s.dropped}};
  }
  json order = json::array();
  for (JudgeCategory c : judge_category_order()) order.push_back(to_string(c));
  return json{{"categories", cats}, {"expected_order", order}, {"ordering_holds", r.ordering_holds()}, {"retried", r.retried}};
}

std::string format_table(const JudgeReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %8s %6s %8s\n", "Category", "Mean", "n", "Dropped");
  out += line;
  for (JudgeCategory c : judge_category_order()) {
    auto it = r.categories.find(c);
    if (it == r.categories.end()) continue;
    const auto& s = it->second;
    if (s.n)
      std::snprintf(line, sizeof line, "%-22s %8.2f %6zu %8zu\n", std::string(to_string(c)).c_str(), s.mean(), s.n, s.dropped);
    else
      std::snprintf(line, sizeof line, "%-22s %8s %6zu %8zu\n", std::string(to_string(c)).c_str(), "-", s.n, s.dropped);
    out += line;
  }
  out += std::string("ordering ") + (r.ordering_holds() ? "holds" : "violated") + "\n";
  return out;
}

JudgeReport judge_style_similarity(const std::vector<JudgeItem>& items, const Gateway& gateway,
                                   const JudgeOptions& options) {
  auto request_for = [&](const JudgeItem& item, bool retry) {
    std::string tag = "judge." + std::string(to_string(item.category)) + (retry ? ".retry" : "");
    return make_request(options.prompts.style_similarity.render({{"response", item.response}, {"exemplar", item.exemplar}}),
                        options.gen, std::move(tag));
  };
  std::vector<PromptRequest> requests;
  requests.reserve(items.size());
  for (const auto& item : items) requests.push_back(request_for(item, false));
  auto items_out = gateway.complete_batch(requests, options.parallelism);

  std::vector<std::optional<double>> scores(items.size());
  std::vector<std::size_t> again;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items_out[i].ok()) scores[i] = parse_similarity_reply(first_text(items_out[i]));
    if (!scores[i]) again.push_back(i);
  }
  JudgeReport report;
  report.retried = again.size();
  if (!again.empty()) {
    std::vector<PromptRequest> retry;
    for (std::size_t i : again) retry.push_back(request_for(items[i], true));
    auto retry_out = gateway.complete_batch(retry, options.parallelism);
    for (std::size_t k = 0; k < again.size(); ++k)
      if (retry_out[k].ok()) scores[again[k]] = parse_similarity_reply(first_text(retry_out[k]));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    CategoryStats& s = report.categories[items[i].category];
    if (scores[i]) {
      ++s.n;
      s.sum += *scores[i];
    } else {
      ++s.dropped;
    }
  }
  return report;
}

}  // namespace persrm
