#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <thread>

#include "error.hpp"
#include "gateway.hpp"
#include "synthetic_corpus.hpp"
#include "text_util.hpp"

using namespace persrm;
using namespace std::chrono_literals;

namespace {

// Fails with `status` for the first `failures` calls, then echoes.
struct FlakyBackend : Backend {
  int failures;
  int status;
  std::atomic<int> calls{0};
  FlakyBackend(int f, int s) : failures(f), status(s) {}
  std::string id() const override { return "flaky"; }
  CompletionResult call(const PromptRequest& r) override {
    if (calls++ < failures) throw TransportError("boom", status, status == 0 || status == 429 || status >= 500);
    CompletionResult c;
    c.texts.assign(static_cast<std::size_t>(r.n), r.user);
    return c;
  }
};

PromptRequest req(std::string user, std::string tag = "t") {
  PromptRequest r;
  r.user = std::move(user);
  r.tag = std::move(tag);
  return r;
}

}  // namespace

TEST_CASE("request validation") {
  auto r = req("x");
  r.top_p = 0.0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r.top_p = 1.0;
  r.n = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("retryable failures back off exponentially then succeed") {
  auto backend = std::make_shared<FlakyBackend>(2, 503);
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway g(backend, RetryPolicy{3, 1000ms}, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  auto out = g.complete(req("hello"));
  CHECK(out.texts.at(0) == "hello");
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0] == 1000ms);
  CHECK(sleeps[1] == 2000ms);
}

TEST_CASE("exhausted retries report status and attempt count") {
  auto backend = std::make_shared<FlakyBackend>(10, 429);
  int slept = 0;
  Gateway g(backend, RetryPolicy{3, 1ms}, [&](auto) { ++slept; });
  try {
    g.complete(req("x"));
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.status == 429);
    CHECK(e.attempts == 3);
  }
  CHECK(backend->calls == 3);
  CHECK(slept == 2);
}

TEST_CASE("non-retryable status and refusals are not retried") {
  auto backend = std::make_shared<FlakyBackend>(10, 400);
  Gateway g(backend, RetryPolicy{3, 1ms}, [](auto) {});
  CHECK_THROWS_AS(g.complete(req("x")), TransportError);
  CHECK(backend->calls == 1);

  MockScript s;
  s.set("nope", "refuse");
  Gateway m(std::make_shared<MockBackend>(s), RetryPolicy{3, 1ms}, [](auto) {});
  CHECK_THROWS_AS(m.complete(req("x", "nope")), RefusalError);
}

TEST_CASE("mock script lookup: exact beats prefix, longer prefix wins") {
  MockScript s;
  s.set("judge.*", "fixed(a)");
  s.set("judge.cross*", "fixed(b)");
  s.set("judge.cross_author", "fixed(c)");
  CHECK(s.lookup("judge.cross_author").args[0] == "c");
  CHECK(s.lookup("judge.cross_author.retry").args[0] == "b");
  CHECK(s.lookup("judge.intra_author").args[0] == "a");
  CHECK(s.lookup("trace").name == "echo");
  CHECK_THROWS_AS(MockBehavior::parse("nonsense(1)"), ConfigError);
  CHECK(MockBehavior::parse("fixed(a, b)").args.at(0) == "a, b");
  CHECK(MockBehavior::parse("trace(9, 3)").args.at(1) == "3");
}

TEST_CASE("mock replies are pure functions of their inputs") {
  MockScript s;
  s.seed = 4;
  s.set("r", "random-score");
  MockBackend a(s), b(s);
  auto r = req("Score this", "r");
  r.n = 4;
  auto x = a.call(r);
  auto y = b.call(r);
  CHECK(x.texts == y.texts);
  CHECK(x.texts[0] != x.texts[1]);
  s.seed = 5;
  MockBackend c(s);
  CHECK(c.call(r).texts != x.texts);
}

TEST_CASE("perturb swaps exactly k words") {
  MockScript s;
  s.set("p", "perturb(3)");
  MockBackend m(s);
  std::string para = "the big dog said good things about a new house";
  std::map<std::string, std::string> slots{{"paragraph", para}};
  auto r = req(PromptSet::builtin().minor_replacement.render(slots), "p");
  auto out = m.call(r).texts.at(0);
  auto w0 = split_words(para);
  auto w1 = split_words(out);
  REQUIRE(w0.size() == w1.size());
  int diff = 0;
  for (std::size_t i = 0; i < w0.size(); ++i) diff += w0[i] != w1[i];
  CHECK(diff == 3);
}

TEST_CASE("batch results align with requests for any parallelism") {
  MockScript s;
  s.set("e", "echo");
  s.set("bad", "fail(500)");
  auto backend = std::make_shared<MockBackend>(s);
  Gateway g(backend, RetryPolicy{2, 0ms}, [](auto) {});
  std::vector<PromptRequest> reqs;
  for (int i = 0; i < 40; ++i) reqs.push_back(req("p" + std::to_string(i), i % 7 == 3 ? "bad" : "e"));
  auto one = g.complete_batch(reqs, 1);
  auto eight = g.complete_batch(reqs, 8);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(one[i].ok() == eight[i].ok());
    if (one[i].ok()) {
      CHECK(one[i].result->texts[0] == reqs[i].user);
      CHECK(eight[i].result->texts[0] == reqs[i].user);
    } else {
      CHECK(one[i].status == 500);
      CHECK(eight[i].error_kind == ErrorKind::gateway);
    }
  }
  CHECK_THROWS_AS(g.complete_batch(reqs, 0), ConfigError);
}

TEST_CASE("audit log numbers every call") {
  testing::TempDir dir("audit");
  MockScript s;
  auto log = std::make_shared<AuditLog>(dir / "logs/g.jsonl");
  Gateway g(std::make_shared<MockBackend>(s));
  g.set_audit_log(log);
  std::vector<PromptRequest> reqs(12, req("hi"));
  g.complete_batch(reqs, 4);
  CHECK(log->records() == 12);
  auto rows = read_jsonl(dir / "logs/g.jsonl");
  REQUIRE(rows.size() == 12);
  std::set<int> seqs;
  for (const auto& r : rows) seqs.insert(r["seq"].get<int>());
  CHECK(seqs.size() == 12);
  CHECK(*seqs.rbegin() == 11);
}

TEST_CASE("chat completion parsing") {
  auto ok = json::parse(R"({"choices":[{"message":{"content":"hi"},"logprobs":{"content":[{"token":"hi","logprob":-0.5}]}}]})");
  auto r = parse_chat_completion(ok);
  CHECK(r.texts == std::vector<std::string>{"hi"});
  REQUIRE(r.token_logprobs);
  CHECK((*r.token_logprobs)[0][0].logprob == doctest::Approx(-0.5));
  auto refused = json::parse(R"({"choices":[{"message":{"content":null,"refusal":"no"}}]})");
  CHECK_THROWS_AS(parse_chat_completion(refused), RefusalError);
  auto filtered = json::parse(R"({"choices":[{"finish_reason":"content_filter","message":{}}]})");
  CHECK_THROWS_AS(parse_chat_completion(filtered), RefusalError);
  CHECK_THROWS_AS(parse_chat_completion(json::object()), TransportError);
}

TEST_CASE("remote backend against a local endpoint") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
    int n = hits++;
    seen_auth = rq.get_header_value("Authorization");
    auto body = json::parse(rq.body);
    if (body["messages"].back()["content"] == "flaky" && n == 0) {
      rs.status = 503;
      rs.set_content("busy", "text/plain");
      return;
    }
    // Ignore n: always answer with one choice so the client asks again.
    json reply{{"choices", json::array({{{"message", {{"content", "ok:" + body["model"].get<std::string>()}}}}})}};
    rs.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteConfig cfg;
  cfg.api_base = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
  cfg.model = "m1";
  cfg.api_key = "secret";
  cfg.timeout_s = 5;
  Gateway g(std::make_shared<RemoteBackend>(cfg), RetryPolicy{3, 0ms}, [](auto) {});
  auto r = req("flaky");
  r.n = 3;
  auto out = g.complete(r);
  CHECK(out.texts == std::vector<std::string>(3, "ok:m1"));
  CHECK(seen_auth == "Bearer secret");
  CHECK(hits == 4);

  server.stop();
  th.join();

  RemoteConfig bad;
  bad.model = "m";
  CHECK_THROWS_AS(RemoteBackend{bad}, ConfigError);
  bad.api_base = "no-scheme";
  CHECK_THROWS_AS(RemoteBackend{bad}, ConfigError);
}
