#include "gateway.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace persrm {

void PromptRequest::validate() const {
  if (n < 1) throw ConfigError("request n must be >= 1");
  if (max_tokens < 1) throw ConfigError("request max_tokens must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
}

json to_json(const PromptRequest& r) {
  return {{"system", r.system}, {"user", r.user},           {"temperature", r.temperature}, {"top_p", r.top_p},
          {"n", r.n},           {"max_tokens", r.max_tokens}, {"tag", r.tag}};
}

json to_json(const CompletionResult& r) {
  json j{{"texts", r.texts}, {"backend_id", r.backend_id}};
  if (r.token_logprobs) {
    json lp = json::array();
    for (const auto& cand : *r.token_logprobs) {
      json c = json::array();
      for (const auto& t : cand) c.push_back({t.token, t.logprob});
      lp.push_back(std::move(c));
    }
    j["token_logprobs"] = std::move(lp);
  }
  return j;
}

AuditLog::AuditLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw DataError("cannot open audit log " + path.string());
}

void AuditLog::append(const PromptRequest& request, const json& response, std::int64_t latency_ms) {
  std::lock_guard lock(mutex_);
  json rec{{"seq", seq_++}, {"tag", request.tag}, {"request", to_json(request)}, {"response", response},
           {"latency_ms", latency_ms}};
  out_ << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  out_.flush();
}

std::uint64_t AuditLog::records() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, RetryPolicy policy, Sleeper sleeper)
    : backend_(std::move(backend)), policy_(policy), sleeper_(std::move(sleeper)) {
  if (!backend_) throw ConfigError("gateway requires a backend");
  if (policy_.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

CompletionResult Gateway::complete(const PromptRequest& request) const {
  request.validate();
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  };
  auto backoff = policy_.base_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      CompletionResult result = backend_->call(request);
      if (static_cast<int>(result.texts.size()) != request.n) {
        throw TransportError("backend returned " + std::to_string(result.texts.size()) + " candidates, expected " +
                                 std::to_string(request.n),
                             0, false, attempt);
      }
      result.latency_ms = elapsed();
      if (audit_) audit_->append(request, to_json(result), result.latency_ms);
      return result;
    } catch (TransportError& e) {
      e.attempts = attempt;
      if (!e.retryable || attempt >= policy_.max_attempts) {
        if (audit_)
          audit_->append(request, {{"error", "transport"}, {"status", e.status}, {"message", e.what()}, {"attempts", attempt}},
                         elapsed());
        if (e.retryable)
          throw TransportError("retries exhausted after " + std::to_string(attempt) + " attempts: " + e.what(), e.status,
                               true, attempt);
        throw;
      }
      sleeper_(backoff);
      backoff *= 2;
    } catch (const RefusalError& e) {
      if (audit_) audit_->append(request, {{"error", "refusal"}, {"payload", e.payload}}, elapsed());
      throw;
    }
  }
}

std::vector<BatchItem> Gateway::complete_batch(const std::vector<PromptRequest>& requests, int parallelism) const {
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  std::vector<BatchItem> items(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      BatchItem& item = items[i];
      try {
        item.result = complete(requests[i]);
      } catch (const TransportError& e) {
        item.error_kind = e.kind();
        item.error = e.what();
        item.status = e.status;
      } catch (const Error& e) {
        item.error_kind = e.kind();
        item.error = e.what();
      } catch (const std::exception& e) {
        item.error_kind = ErrorKind::gateway;
        item.error = e.what();
      }
    }
  };
  std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), requests.size());
  if (threads <= 1) {
    worker();
    return items;
  }
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return items;
}

}  // namespace persrm
