#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "error.hpp"
#include "augment.hpp"
#include "synthetic_corpus.hpp"

using namespace persrm;

namespace {

// Exhaustive search over alignments; returns the lexicographic minimum (edits, indels).
std::pair<std::size_t, std::size_t> brute_alignment(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                                    std::size_t i = 0, std::size_t j = 0) {
  if (i == a.size()) return {b.size() - j, b.size() - j};
  if (j == b.size()) return {a.size() - i, a.size() - i};
  auto diag = brute_alignment(a, b, i + 1, j + 1);
  if (a[i] != b[j]) diag.first += 1;
  auto del = brute_alignment(a, b, i + 1, j);
  del.first += 1;
  del.second += 1;
  auto ins = brute_alignment(a, b, i, j + 1);
  ins.first += 1;
  ins.second += 1;
  return std::min({diag, del, ins});
}

std::string joined(const std::vector<std::string>& w) {
  std::string s;
  for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
  return s;
}

struct Fixture {
  Corpus corpus = testing::synthetic_corpus();
  SplitAssignment assignment = make_splits(corpus, testing::standard_spec());
  SplitIndex index{corpus, assignment};
};

std::shared_ptr<Gateway> mock_gateway(MockScript s = {}) {
  if (s.behaviors.empty()) s.set("augment.perturb*", "perturb(4)");
  return std::make_shared<Gateway>(std::make_shared<MockBackend>(s), RetryPolicy{1, std::chrono::milliseconds(0)});
}

}  // namespace

TEST_CASE("word alignment matches exhaustive search") {
  Rng rng(17);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<std::string> a, b;
    for (std::size_t k = rng.below(6); k > 0; --k) a.push_back(vocab[rng.below(4)]);
    for (std::size_t k = rng.below(6); k > 0; --k) b.push_back(vocab[rng.below(4)]);
    auto [edits, indels] = brute_alignment(a, b);
    auto d = word_alignment_diff(joined(a), joined(b));
    CHECK(d.substitutions + d.insertions + d.deletions == edits);
    CHECK(d.insertions + d.deletions == indels);
    CHECK(static_cast<long>(d.insertions) - static_cast<long>(d.deletions) ==
          static_cast<long>(b.size()) - static_cast<long>(a.size()));
  }
}

TEST_CASE("perturbation bounds") {
  std::string base = "one two three four five six seven eight nine ten";
  CHECK(verify_perturbation(base, "one two 3 four five six seven eight nine ten").accepted);
  auto none = verify_perturbation(base, base);
  CHECK_FALSE(none.accepted);
  CHECK(none.reason.find("substitutions 0") != std::string::npos);
  auto many = verify_perturbation(base, "1 2 3 4 5 6 7 eight nine ten");
  CHECK_FALSE(many.accepted);
  auto longer = verify_perturbation(base, base + " x y z");
  CHECK_FALSE(longer.accepted);
  auto sub_plus_ins = verify_perturbation(base, "one two 3 four five six seven eight nine ten eleven");
  CHECK(sub_plus_ins.accepted);
  CHECK(sub_plus_ins.insertions == 1);
  CHECK(sub_plus_ins.word_delta == 1);
}

TEST_CASE("strategy sampler follows the weights") {
  StrategyMix mix;
  mix.weights = {{{4, 0, 1}, {2, 2, 1}}};
  Rng rng(99);
  std::map<std::pair<PosStrategy, NegStrategy>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_cell(mix, rng)]++;
  CHECK(counts[{PosStrategy::intra_author, NegStrategy::random_style}] == 0);
  double total = 10;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t n = 0; n < 3; ++n) {
      double expect = mix.weights[p][n] / total;
      double got = counts[{static_cast<PosStrategy>(p), static_cast<NegStrategy>(n)}] / double(draws);
      CHECK(std::abs(got - expect) < 0.01);
    }
  mix.weights = {{{0, 0, 0}, {0, 0, 0}}};
  CHECK_THROWS_AS(mix.validate(), ConfigError);
}

TEST_CASE("intra-author positive needs a second document") {
  Corpus corpus;
  for (const char* a : {"A", "B"}) {
    Document d;
    d.id = "x";
    d.author_id = a;
    d.genre = Genre::news;
    d.corpus = CorpusLabel::ccat;
    d.body = "text";
    corpus.push_back(d);
  }
  SplitSpec spec;
  spec.counts[CorpusLabel::ccat] = {2, 0, 0};
  auto a = make_splits(corpus, spec);
  SplitIndex index(corpus, a);
  CHECK_THROWS_AS(intra_author_positive(index, "A", "A/x", 1), IneligibleError);
  CHECK(cross_author_negative(index, Split::train, "A", 1).author_id == "B");
}

TEST_CASE("build pairs: provenance, ids and strategy invariants") {
  Fixture f;
  AugmentOptions opt;
  opt.mix.seed = 3;
  opt.mix.pairs_per_author = 2;
  auto g = mock_gateway();
  auto r = build_pairs(f.index, opt, *g);
  CHECK(r.report.eligible_authors == 63);
  CHECK(r.pairs.size() == r.report.emitted);
  CHECK(r.pairs.size() + r.report.failures.size() == r.report.planned);
  CHECK(r.report.planned == 126);
  std::set<std::string> ids;
  for (const auto& p : r.pairs) {
    ids.insert(p.id);
    CHECK(p.id.rfind("train-" + p.author_id + "-0000", 0) == 0);
    REQUIRE(p.exemplar_docs.size() == 1);
    CHECK(p.positive_doc != p.exemplar_docs[0]);
    CHECK(p.positive_doc.rfind(p.author_id + "/", 0) == 0);
    CHECK(f.assignment.split_of(p.author_id) == Split::train);
    CHECK(p.positive != p.negative);
    if (p.neg_strategy == NegStrategy::cross_author) {
      CHECK(p.negative_doc.rfind(p.author_id + "/", 0) != 0);
      CHECK(f.assignment.split_of(p.negative_doc.substr(0, p.negative_doc.find('/'))) == Split::train);
    } else {
      CHECK(p.negative_doc.empty());
    }
    if (p.pos_strategy == PosStrategy::lexical_perturbation) {
      REQUIRE(p.perturbation);
      CHECK(p.perturbation->accepted);
      CHECK(p.perturbation->substitutions == 4);
    }
  }
  CHECK(ids.size() == r.pairs.size());
  std::set<std::string> cells;
  for (const auto& [cell, n] : r.report.per_cell) cells.insert(cell);
  CHECK(cells.size() == 6);
}

TEST_CASE("build pairs is deterministic across parallelism") {
  Fixture f;
  AugmentOptions opt;
  opt.mix.seed = 8;
  opt.exemplar_count = 2;
  auto g = mock_gateway();
  opt.parallelism = 1;
  auto a = build_pairs(f.index, opt, *g);
  opt.parallelism = 8;
  auto b = build_pairs(f.index, opt, *g);
  CHECK(pairs_to_jsonl(a.pairs) == pairs_to_jsonl(b.pairs));
  CHECK(to_json(a.report) == to_json(b.report));
  for (const auto& p : a.pairs) CHECK(p.exemplars.size() == 2);
}

TEST_CASE("rejected perturbations are retried once and then recorded") {
  Fixture f;
  AugmentOptions opt;
  opt.mix.weights = {{{0, 0, 0}, {1, 0, 0}}};
  opt.max_pairs = 10;
  MockScript s;
  s.set("augment.perturb", "verbatim");
  s.set("augment.perturb.retry", "perturb(2)");
  auto r = build_pairs(f.index, opt, *mock_gateway(s));
  REQUIRE(r.pairs.size() == 10);
  for (const auto& p : r.pairs) CHECK(p.perturbation->attempts == 2);

  MockScript bad;
  bad.set("augment.perturb*", "perturb(9)");
  auto r2 = build_pairs(f.index, opt, *mock_gateway(bad));
  CHECK(r2.pairs.empty());
  CHECK(r2.report.rejections["perturbation_rejected"] == 10);
}

TEST_CASE("empty generated negatives are dropped") {
  Fixture f;
  AugmentOptions opt;
  opt.mix.weights = {{{0, 0, 1}, {0, 0, 0}}};
  opt.max_pairs = 5;
  MockScript s;
  s.set("augment.confounding", "fixed()");
  auto r = build_pairs(f.index, opt, *mock_gateway(s));
  CHECK(r.pairs.empty());
  CHECK(r.report.rejections["empty_response"] == 5);
}

TEST_CASE("pair json roundtrip") {
  Fixture f;
  AugmentOptions opt;
  opt.max_pairs = 12;
  auto r = build_pairs(f.index, opt, *mock_gateway());
  for (const auto& p : r.pairs) CHECK(to_json(pair_from_json(to_json(p))) == to_json(p));
  json broken = to_json(r.pairs.at(0));
  broken["exemplars"] = json::array();
  CHECK_THROWS_AS(pair_from_json(broken), DataError);
}
