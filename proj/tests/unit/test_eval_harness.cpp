#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "eval_harness.hpp"
#include "synthetic_corpus.hpp"

using namespace persrm;

namespace {

std::vector<PreferencePair> make_pairs(int n, CorpusLabel corpus = CorpusLabel::ccat) {
  std::vector<PreferencePair> out;
  for (int i = 0; i < n; ++i) {
    PreferencePair p;
    char id[32];
    std::snprintf(id, sizeof id, "test-A%02d-%05d", i % 13, i);
    p.id = id;
    p.query = "Query " + std::to_string(i);
    p.exemplars = {"exemplar one " + std::to_string(i), "exemplar two " + std::to_string(i),
                   "exemplar three " + std::to_string(i)};
    int plus = 1 + (i * 3) % 10, minus = 1 + (i * 7) % 10;
    p.positive = "a much longer positive response text " + std::to_string(i) + " [score=" + std::to_string(plus) + "]";
    p.negative = "short neg " + std::to_string(i) + " [score=" + std::to_string(minus) + "]";
    p.author_id = "A";
    p.split = Split::test;
    p.corpus = corpus;
    out.push_back(p);
  }
  return out;
}

Gateway gateway_with(const std::string& tag, const std::string& behavior, std::uint64_t seed = 0) {
  MockScript s;
  s.seed = seed;
  s.set(tag, behavior);
  return Gateway(std::make_shared<MockBackend>(s), RetryPolicy{1, std::chrono::milliseconds(0)});
}

void check_identity(const AccuracyReport& r) {
  for (const auto& [name, s] : r.slices) CHECK(s.correct + s.incorrect + s.tie + s.format_failure == s.n);
}

}  // namespace

TEST_CASE("score comparison and slicing") {
  CHECK(compare_scores(9, 7) == Outcome::correct);
  CHECK(compare_scores(5, 5) == Outcome::tie);
  CHECK(compare_scores(4, 8) == Outcome::incorrect);
  auto p = make_pairs(1)[0];
  CHECK(slice_of(p) == "CCAT");
  p.split = Split::cross_domain;
  p.corpus = CorpusLabel::cmcc;
  CHECK(slice_of(p) == "cross_domain");
}

TEST_CASE("an always-right judge scores 1.0") {
  auto g = gateway_with("eval.generative", "score-echo");
  auto pairs = make_pairs(40);
  for (auto& p : pairs) {
    p.positive = "pos [score=9]";
    p.negative = "neg [score=2]";
  }
  auto r = eval_generative(pairs, g);
  CHECK(r.slices.at("CCAT").accuracy() == 1.0);
  CHECK(r.slices.at("CCAT").n == 40);
}

TEST_CASE("coin flip judge is near chance") {
  auto g = gateway_with("eval.generative", "coin-flip", 21);
  auto r = eval_generative(make_pairs(2000), g, {});
  double acc = r.slices.at("CCAT").accuracy();
  CHECK(acc >= 0.47);
  CHECK(acc <= 0.53);
  check_identity(r);
}

TEST_CASE("exemplar count is recorded and rendered") {
  auto g = gateway_with("eval.generative", "score-echo");
  EvalOptions o;
  o.exemplar_count = 3;
  auto r = eval_generative(make_pairs(5), g, o);
  CHECK(r.exemplar_count == 3);
  CHECK(to_json(r)["slices"]["CCAT"]["exemplar_count"] == 3);
  for (const auto& rec : r.records) CHECK(rec.exemplar_count == 3);
  o.exemplar_count = 4;
  CHECK_THROWS_AS(eval_generative(make_pairs(2), g, o), IneligibleError);
}

TEST_CASE("format failures and gateway errors count as incorrect") {
  auto bad = gateway_with("eval.generative", "malformed");
  auto r = eval_generative(make_pairs(10), bad);
  CHECK(r.slices.at("CCAT").format_failure == 10);
  CHECK(r.slices.at("CCAT").accuracy() == 0.0);
  CHECK(r.records[0].detail == "missing_section");
  auto down = gateway_with("eval.generative", "fail(503)");
  auto r2 = eval_generative(make_pairs(3), down);
  CHECK(r2.slices.at("CCAT").format_failure_rate() == 1.0);
  CHECK(r2.records[0].detail.rfind("gateway", 0) == 0);
  CHECK(to_json(r2)["format_failure_policy"] == "counted_incorrect");
}

TEST_CASE("both_orders_mean does not depend on which order is issued first") {
  auto g = gateway_with("eval.generative", "score-echo(2)");
  auto pairs = make_pairs(60);
  EvalOptions o;
  o.order_policy = EvalOrderPolicy::both_orders_mean;
  o.base_order = Order::pos_first;
  auto a = eval_generative(pairs, g, o);
  o.base_order = Order::neg_first;
  o.parallelism = 4;
  auto b = eval_generative(pairs, g, o);
  CHECK(to_json(a).dump() == to_json(b).dump());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(a.records[i].r_plus == b.records[i].r_plus);
    CHECK(a.records[i].r_minus == b.records[i].r_minus);
  }
  // The positional bias lands on each response once, so it cancels in the comparison.
  auto plain = gateway_with("eval.generative", "score-echo");
  auto c = eval_generative(pairs, plain, o);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(c.records[i].outcome == a.records[i].outcome);
}

TEST_CASE("scalar mode") {
  auto len = gateway_with("eval.scalar", "length-score");
  auto r = eval_scalar(make_pairs(30), len);
  CHECK(r.slices.at("CCAT").accuracy() == 1.0);
  CHECK(r.mode == EvalMode::scalar);

  auto flat = gateway_with("eval.scalar", "fixed(5)");
  auto f = eval_scalar(make_pairs(334), flat);
  CHECK(f.slices.at("CCAT").n == 334);
  CHECK(f.slices.at("CCAT").tie_rate() == 1.0);
  CHECK(f.slices.at("CCAT").accuracy() == 0.0);

  auto prose = gateway_with("eval.scalar", "fixed(about 7)");
  CHECK(eval_scalar(make_pairs(2), prose).slices.at("CCAT").format_failure == 2);

  auto p = make_pairs(1)[0];
  auto text = scalar_prompt(p, {"E1", "E2"}, "RESP");
  CHECK(text.find("Exemplar 2:\nE2") != std::string::npos);
  CHECK(text.find("RESP") != std::string::npos);
  CHECK(parse_single_number(" 7.25\n") == 7.25);
  CHECK_FALSE(parse_single_number("7 points"));
  CHECK_FALSE(parse_single_number(""));
}

TEST_CASE("slices partition the pairs") {
  auto pairs = make_pairs(9, CorpusLabel::ccat);
  auto more = make_pairs(6, CorpusLabel::cmcc);
  for (std::size_t i = 0; i < more.size(); ++i) {
    more[i].id += "m";
    if (i % 2) more[i].split = Split::cross_domain;
  }
  pairs.insert(pairs.end(), more.begin(), more.end());
  auto r = eval_generative(pairs, gateway_with("eval.generative", "trace(8,2)"));
  CHECK(r.slices.at("CCAT").n == 9);
  CHECK(r.slices.at("CMCC").n == 3);
  CHECK(r.slices.at("cross_domain").n == 3);
  auto table = format_table(r);
  CHECK(table.find("Cr. Do.") != std::string::npos);
  CHECK(table.find("# Ex.") != std::string::npos);
}

TEST_CASE("similarity replies") {
  CHECK(parse_similarity_reply("9") == 9.0);
  CHECK(parse_similarity_reply(" 7.5 \n") == 7.5);
  CHECK_FALSE(parse_similarity_reply("7.5 because the tone matches"));
  CHECK_FALSE(parse_similarity_reply("11"));
  CHECK_FALSE(parse_similarity_reply("-1"));
}

TEST_CASE("judge reproduces a scripted score table") {
  const std::vector<std::pair<JudgeCategory, std::string>> table{
      {JudgeCategory::intra_author, "9.41"},     {JudgeCategory::minor_replacement, "9.39"},
      {JudgeCategory::style_mimicking, "5.89"},  {JudgeCategory::cross_author, "3.86"},
      {JudgeCategory::style_randomization, "2.41"}};
  MockScript s;
  std::vector<JudgeItem> items;
  for (const auto& [c, score] : table) {
    s.set("judge." + std::string(to_string(c)) + "*", "style-judge(" + score + ")");
    for (int i = 0; i < 4; ++i)
      items.push_back({std::to_string(i), c, "response " + std::to_string(i), "exemplar"});
  }
  Gateway g(std::make_shared<MockBackend>(s));
  auto r = judge_style_similarity(items, g);
  for (const auto& [c, score] : table) {
    CHECK(r.categories.at(c).n == 4);
    CHECK(std::abs(r.categories.at(c).mean() - std::stod(score)) < 1e-12);
  }
  CHECK(r.ordering_holds());
  CHECK(r.retried == 0);
  CHECK(format_table(r).find("9.41") != std::string::npos);
}

TEST_CASE("judge retries once then drops") {
  MockScript s;
  s.set("judge.cross_author", "fixed(7.5 because)");
  s.set("judge.cross_author.retry", "style-judge(4)");
  s.set("judge.intra_author*", "fixed(nope)");
  Gateway g(std::make_shared<MockBackend>(s));
  std::vector<JudgeItem> items{{"a", JudgeCategory::cross_author, "r", "e"}, {"b", JudgeCategory::intra_author, "r", "e"}};
  auto r = judge_style_similarity(items, g);
  CHECK(r.retried == 2);
  CHECK(r.categories.at(JudgeCategory::cross_author).n == 1);
  CHECK(r.categories.at(JudgeCategory::cross_author).mean() == 4.0);
  CHECK(r.categories.at(JudgeCategory::intra_author).dropped == 1);
  CHECK(to_json(r)["categories"]["intra_author"]["mean"].is_null());
}

TEST_CASE("judge items follow the pair strategies") {
  auto pairs = make_pairs(3);
  pairs[1].pos_strategy = PosStrategy::lexical_perturbation;
  pairs[1].neg_strategy = NegStrategy::confounding;
  pairs[2].neg_strategy = NegStrategy::random_style;
  auto items = judge_items_from_pairs(pairs);
  REQUIRE(items.size() == 6);
  CHECK(items[0].category == JudgeCategory::intra_author);
  CHECK(items[1].category == JudgeCategory::cross_author);
  CHECK(items[2].category == JudgeCategory::minor_replacement);
  CHECK(items[3].category == JudgeCategory::style_mimicking);
  CHECK(items[5].category == JudgeCategory::style_randomization);
  CHECK(items[3].exemplar == pairs[1].exemplars.front());
}
