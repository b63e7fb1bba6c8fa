#include <doctest.h>

#include <set>

#include "error.hpp"
#include "sft_export.hpp"
#include "synthetic_corpus.hpp"
#include "text_util.hpp"

using namespace persrm;
using persrm::testing::TempDir;

namespace {

PreferencePair pair_n(int i) {
  PreferencePair p;
  p.id = "train-A" + std::to_string(i % 7) + "-" + std::to_string(100000 + i);
  p.query = "Write about item " + std::to_string(i);
  p.exemplars = {"An exemplar text number " + std::to_string(i) + "."};
  p.positive = "positive " + std::to_string(i);
  p.negative = "negative " + std::to_string(i);
  p.author_id = "A" + std::to_string(i % 7);
  return p;
}

Evaluation eval(int a, int b) { return Evaluation{"Tone and diction", "A matches better than B.", a, b, ""}; }

}  // namespace

TEST_CASE("sft record roundtrips its evaluation") {
  SftOptions opt;
  for (auto policy : {OrderPolicy::pos_first, OrderPolicy::neg_first}) {
    opt.order_policy = policy;
    auto r = build_sft_record(pair_n(1), eval(9, 7), opt);
    auto parsed = parse_evaluation(r.target, r.order);
    REQUIRE(parsed.verdict.valid);
    CHECK(parsed.evaluation->r_plus == 9);
    CHECK(parsed.evaluation->r_minus == 7);
    auto slots = parse_judge_prompt(r.prompt);
    REQUIRE(slots);
    CHECK(slots->response_a == (policy == OrderPolicy::pos_first ? "positive 1" : "negative 1"));
  }
  CHECK_THROWS_AS(build_sft_record(pair_n(1), eval(5, 5)), VerificationError);
  CHECK_THROWS_AS(build_sft_record(pair_n(1), eval(4, 8)), VerificationError);
}

TEST_CASE("seeded order is balanced over ten thousand records") {
  SftOptions opt;
  opt.seed = 12;
  int pos = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) pos += build_sft_record(pair_n(i), eval(8, 2), opt).order == Order::pos_first;
  double frac = pos / double(n);
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);
}

TEST_CASE("loss boundary splits the concatenation exactly") {
  auto r = build_sft_record(pair_n(3), eval(7, 1));
  auto j = to_json(r);
  std::string joined = j["prompt"].get<std::string>() + j["target"].get<std::string>();
  auto offset = j["meta"]["target_offset"].get<std::size_t>();
  CHECK(joined.substr(0, offset) == r.prompt);
  CHECK(joined.substr(offset) == r.target);
  CHECK(j["meta"]["pair_id"] == r.pair_id);
  CHECK(j["meta"]["order"] == std::string(to_string(r.order)));
}

TEST_CASE("export summaries are stable") {
  TempDir dir("sft");
  std::vector<SftRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(build_sft_record(pair_n(i), eval(9, 1)));
  auto a = export_jsonl(recs, dir / "a.jsonl");
  auto b = export_jsonl(recs, dir / "b.jsonl");
  CHECK(a.count == 3);
  CHECK(a.sha256 == b.sha256);
  CHECK(a.sha256 == sha256_file(dir / "a.jsonl"));
  CHECK(read_jsonl(dir / "a.jsonl").size() == 3);
  auto empty = export_jsonl({}, dir / "e.jsonl");
  CHECK(empty.count == 0);
  CHECK(empty.bytes == 0);
  CHECK(read_file(dir / "e.jsonl").empty());
}

TEST_CASE("rft prompts and sidecar") {
  TempDir dir("rft");
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 32; ++i) pairs.push_back(pair_n(i));
  SftOptions opt;
  opt.seed = 4;
  auto ex = export_rft_prompts(pairs, dir / "p.jsonl", dir / "o.jsonl", opt);
  CHECK(ex.prompts.count == 32);
  CHECK(ex.orders.count == 32);
  auto orders = load_order_sidecar(dir / "o.jsonl");
  CHECK(orders.size() == 32);
  for (const auto& row : read_jsonl(dir / "p.jsonl")) {
    auto id = row["pair_id"].get<std::string>();
    REQUIRE(orders.count(id));
    CHECK(row["order"] == std::string(to_string(orders[id])));
    auto slots = parse_judge_prompt(row["prompt"].get<std::string>());
    REQUIRE(slots);
    bool neg = orders[id] == Order::neg_first;
    CHECK(slots->response_a.rfind(neg ? "negative" : "positive", 0) == 0);
  }
  pairs.push_back(pairs.front());
  CHECK_THROWS_AS(build_rft_prompts(pairs, opt), DataError);
}
