#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "templates.hpp"
#include "text_util.hpp"

namespace persrm {

struct PromptRequest {
  std::string system;
  std::string user;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  int n = 1;  // candidate count (group size G for rollouts)
  std::string tag;

  // Throws ConfigError on out-of-range sampling parameters.
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct CompletionResult {
  std::vector<std::string> texts;
  std::optional<std::vector<std::vector<TokenLogprob>>> token_logprobs;
  std::string backend_id;
  std::int64_t latency_ms = 0;
};

json to_json(const PromptRequest& r);
json to_json(const CompletionResult& r);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // One attempt. Throws TransportError / RefusalError.
  virtual CompletionResult call(const PromptRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{1000};  // doubles after each failed attempt
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// JSONL audit trail. Appends are serialized; `seq` increases by one per record.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void append(const PromptRequest& request, const json& response, std::int64_t latency_ms);
  std::uint64_t records() const;

 private:
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::uint64_t seq_ = 0;
};

// Outcome of one batch position: either a result or the error that ended it.
struct BatchItem {
  std::optional<CompletionResult> result;
  std::optional<ErrorKind> error_kind;
  std::string error;
  int status = 0;  // transport status when the error came from the transport

  bool ok() const { return result.has_value(); }
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, RetryPolicy policy = {}, Sleeper sleeper = {});

  void set_audit_log(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }
  const Backend& backend() const { return *backend_; }
  const RetryPolicy& retry_policy() const { return policy_; }

  // Retries retryable transport failures with exponential backoff; refusals and
  // non-retryable statuses surface immediately.
  CompletionResult complete(const PromptRequest& request) const;

  // Results align with `requests`; at most `parallelism` calls are in flight.
  std::vector<BatchItem> complete_batch(const std::vector<PromptRequest>& requests, int parallelism) const;

 private:
  std::shared_ptr<Backend> backend_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::shared_ptr<AuditLog> audit_;
};

// ---------------- mock backend ----------------

// One scripted behavior, written as `name` or `name(arg, ...)`:
//   echo                 reply with the user prompt
//   verbatim             reply with the prompt's payload slot (the paragraph for rewrites)
//   fixed(text)          constant reply
//   style-judge(score)   reply with the score as a bare number
//   trace(a, b)          well-formed evaluation scoring Response A=a, Response B=b
//   malformed            evaluation text lacking the <scores> section
//   perturb(k)           paragraph with k words swapped for substitutes
//   halve                first half of the paragraph
//   score-echo(bias)     scores each response from a `[score=N]` marker (else a text hash); bias added to A
//   coin-flip            [[9,3]] or [[3,9]] by seeded coin
//   style-overlap        scores by word overlap between each response and the context
//   length-score         scalar reply: word count of the response
//   random-score         scalar reply: seeded uniform value in [0, 10)
//   refuse               refusal error
//   fail(status)         transport error with the given status
struct MockBehavior {
  std::string name;
  std::vector<std::string> args;

  static MockBehavior parse(std::string_view spec);
  std::string to_string() const;
};

struct MockScript {
  std::uint64_t seed = 0;
  MockBehavior fallback{"echo", {}};
  // Tag patterns: exact tags, or prefixes ending in '*'. Exact beats prefix; longer prefix wins.
  std::vector<std::pair<std::string, MockBehavior>> behaviors;

  const MockBehavior& lookup(std::string_view tag) const;
  void set(const std::string& pattern, const std::string& behavior);
};

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockScript script, PromptSet prompts = PromptSet::builtin());
  std::string id() const override { return "mock"; }
  CompletionResult call(const PromptRequest& request) override;

  // Reply text for candidate `index`; pure in (seed, system, user, index, behavior).
  std::string reply(const PromptRequest& request, const MockBehavior& behavior, int index) const;

 private:
  MockScript script_;
  PromptSet prompts_;
};

// ---------------- remote backend ----------------

struct RemoteConfig {
  std::string api_base;  // e.g. https://host/v1
  std::string model;
  std::string api_key;
  int timeout_s = 120;
  bool request_logprobs = false;

  // Reads PERSRM_API_BASE, PERSRM_MODEL, PERSRM_API_KEY.
  static RemoteConfig from_env();
};

// OpenAI-compatible chat-completions client.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  std::string id() const override { return "remote:" + config_.model; }
  CompletionResult call(const PromptRequest& request) override;

 private:
  RemoteConfig config_;
};

// Parses a chat-completions response body into texts/logprobs. Throws RefusalError when every
// choice was withheld by a content filter or carries a refusal.
CompletionResult parse_chat_completion(const json& body);

}  // namespace persrm
