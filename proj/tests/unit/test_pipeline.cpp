#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "config.hpp"
#include "pipeline.hpp"
#include "synthetic_corpus.hpp"

using namespace persrm;
using persrm::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Config mock_config(int parallelism = 1) {
  Config c;
  c.set("run.seed", "5");
  c.set("gateway.parallelism", std::to_string(parallelism));
  c.set("mock.behaviors.augment.perturb*", "perturb(4)");
  c.set("mock.behaviors.trace", "style-overlap");
  c.set("augment.max_pairs", "60");
  return c;
}

struct Chain {
  fs::path corpus, splits, pairs, traces, filtered, sft;
};

Chain run_chain(const fs::path& root, const Config& c) {
  auto corpus = testing::synthetic_corpus();
  auto manifest = testing::write_corpus_tree(corpus, root / "raw");
  stage_ingest(c, root / "raw", manifest, root / "ingest");
  stage_split(c, root / "ingest/corpus.jsonl", std::nullopt, root / "split");
  stage_augment(c, root / "ingest/corpus.jsonl", root / "split/splits.json", root / "augment");
  PoolPaths pool{root / "ingest/corpus.jsonl", root / "split/splits.json"};
  stage_trace(c, root / "augment/pairs.jsonl", pool, root / "trace");
  stage_filter(c, root / "trace/traces.jsonl", root / "filter");
  stage_export_sft(c, root / "augment/pairs.jsonl", root / "filter/filtered.jsonl", pool, root / "sft");
  return {root / "ingest/corpus.jsonl", root / "split/splits.json", root / "augment/pairs.jsonl",
          root / "trace/traces.jsonl", root / "filter/filtered.jsonl", root / "sft/sft.jsonl"};
}

}  // namespace

TEST_CASE("chain produces manifests and identical artifacts across parallelism") {
  TempDir a("pipe-a"), b("pipe-b");
  auto ca = run_chain(a.path(), mock_config(1));
  auto cb = run_chain(b.path(), mock_config(8));
  for (auto [x, y] : {std::pair{ca.corpus, cb.corpus}, {ca.splits, cb.splits}, {ca.pairs, cb.pairs},
                      {ca.traces, cb.traces}, {ca.filtered, cb.filtered}, {ca.sft, cb.sft}}) {
    CHECK(read_file(x) == read_file(y));
  }
  auto m = json::parse(read_file(a / "sft/manifest.json"));
  CHECK(m["subcommand"] == "export-sft");
  CHECK(m["seed"] == 5);
  CHECK(m["outputs"].contains("sft.jsonl"));
  CHECK(m["inputs"].contains("pairs"));
  CHECK_FALSE(fs::exists(a / "sft.staging"));
  // The audit log is written but kept out of the digests.
  CHECK(fs::exists(a / "augment/logs/gateway.jsonl"));
  CHECK_FALSE(json::parse(read_file(a / "augment/manifest.json"))["outputs"].contains("logs/gateway.jsonl"));

  auto split = json::parse(read_file(a / "split/manifest.json"))["summary"]["authors"];
  CHECK(split["CCAT"]["train"] == 45);
  CHECK(split["CCAT"]["val"] == 2);
  CHECK(split["CCAT"]["test"] == 3);
  CHECK(split["CMCC"]["train"] == 18);

  for (const auto& row : read_jsonl(ca.sft)) {
    auto parsed = parse_evaluation(row["target"].get<std::string>(), *parse_order(row["meta"]["order"].get<std::string>()));
    REQUIRE(parsed.verdict.valid);
    CHECK(parsed.evaluation->r_plus > parsed.evaluation->r_minus);
  }
}

TEST_CASE("rerunning into the same directory replaces it") {
  TempDir d("pipe-rerun");
  auto c = mock_config();
  auto corpus = testing::synthetic_corpus({3, 3, 0, 0, 2});
  auto manifest = testing::write_corpus_tree(corpus, d / "raw");
  stage_ingest(c, d / "raw", manifest, d / "out");
  auto first = read_file(d / "out/manifest.json");
  stage_ingest(c, d / "raw", manifest, d / "out");
  CHECK(read_file(d / "out/manifest.json") == first);

  fs::create_directories(d / "precious");
  write_file(d / "precious/keep.txt", "x");
  CHECK_THROWS_AS(stage_ingest(c, d / "raw", manifest, d / "precious"), ConfigError);
  CHECK(fs::exists(d / "precious/keep.txt"));
}

TEST_CASE("failing stages leave a quarantine directory") {
  TempDir d("pipe-fail");
  auto c = mock_config();
  auto corpus = testing::synthetic_corpus({10, 2, 21, 2, 3});
  auto manifest = testing::write_corpus_tree(corpus, d / "raw");
  stage_ingest(c, d / "raw", manifest, d / "ingest");
  CHECK_THROWS_AS(stage_split(c, d / "ingest/corpus.jsonl", std::nullopt, d / "split"), DataError);
  CHECK_FALSE(fs::exists(d / "split"));
  CHECK(fs::exists(d / "split.quarantine"));
  CHECK_FALSE(fs::exists(d / "split.staging"));
}

TEST_CASE("export-sft refuses unfiltered traces") {
  TempDir d("pipe-unfiltered");
  auto c = mock_config();
  c.set("mock.behaviors.trace", "malformed");
  run_chain(d.path(), mock_config());
  PoolPaths pool{d / "ingest/corpus.jsonl", d / "split/splits.json"};
  stage_trace(c, d / "augment/pairs.jsonl", pool, d / "bad-trace");
  CHECK_THROWS_AS(stage_export_sft(c, d / "augment/pairs.jsonl", d / "bad-trace/traces.jsonl", pool, d / "bad-sft"),
                  VerificationError);
  CHECK(fs::exists(d / "bad-sft.quarantine"));
}

TEST_CASE("verify-split flags an edited assignment") {
  TempDir d("pipe-verify");
  auto c = mock_config();
  run_chain(d.path(), c);
  auto a = parse_assignment(read_file(d / "split/splits.json"));
  auto test_author = *a.authors_in(Split::test).begin();
  stage_verify_split(c, d / "ingest/corpus.jsonl", d / "split/splits.json", d / "ok");
  std::string text = read_file(d / "split/splits.json");
  auto pos = text.find("\"authors\": {");
  text.insert(pos + 12, "\n    \"" + test_author + "\": \"train\",");
  write_file(d / "edited.json", text);
  CHECK_THROWS_AS(stage_verify_split(c, d / "ingest/corpus.jsonl", d / "edited.json", d / "bad"), VerificationError);
  auto report = json::parse(read_file(d / "bad.quarantine/verification.json"));
  CHECK(report["violations"][0]["subject"] == test_author);
}

TEST_CASE("rollout scoring, eval, judge and report") {
  TempDir d("pipe-misc");
  auto c = mock_config();
  write_file(d / "rollouts.jsonl", "{\"prompt_id\":\"p\",\"rewards\":[1,0,0,-1]}\n");
  auto s = stage_score_rollouts(c, d / "rollouts.jsonl", std::nullopt, d / "scores");
  CHECK(s["groups_off_group_size"] == 1);
  auto row = read_jsonl(d / "scores/scores.jsonl").at(0);
  CHECK(std::abs(row["advantages"][0].get<double>() - 1.41421) < 1e-5);

  run_chain(d.path(), c);
  c.set("eval.exemplar_count", "3");
  c.set("mock.behaviors.eval.generative", "trace(8,2)");
  c.set("eval.single_order", "pos_first");
  c.set("augment.splits", "[\"test\"]");
  c.set("augment.max_pairs", "0");
  stage_augment(c, d / "ingest/corpus.jsonl", d / "split/splits.json", d / "test-pairs");
  PoolPaths pool{d / "ingest/corpus.jsonl", d / "split/splits.json"};
  auto e = stage_eval(c, d / "test-pairs/pairs.jsonl", pool, d / "eval");
  CHECK(e["exemplar_count"] == 3);
  CHECK(e["slices"]["CCAT"]["accuracy"] == 1.0);

  c.set("mock.behaviors.judge.*", "style-judge(6)");
  auto j = stage_judge_quality(c, d / "augment/pairs.jsonl", d / "judge");
  CHECK(j["categories"]["intra_author"]["mean"] == 6.0);

  auto text = render_report(d / "eval");
  CHECK(text.find("Cr. Do.") != std::string::npos);
  CHECK(text.find("changed since run") == std::string::npos);
  write_file(d / "eval/eval_table.txt", "tampered");
  CHECK(render_report(d / "eval").find("changed since run") != std::string::npos);
  CHECK_THROWS_AS(render_report(d / "raw"), DataError);
}
