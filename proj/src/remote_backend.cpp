#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "gateway.hpp"

namespace persrm {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint split_base(const std::string& base) {
  auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("PERSRM_API_BASE must include a scheme: " + base);
  auto path_start = base.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base.substr(0, path_start);
  e.path = path_start == std::string::npos ? "" : base.substr(path_start);
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  return e;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig c;
  if (const char* v = std::getenv("PERSRM_API_BASE")) c.api_base = v;
  if (const char* v = std::getenv("PERSRM_MODEL")) c.model = v;
  if (const char* v = std::getenv("PERSRM_API_KEY")) c.api_key = v;
  return c;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.api_base.empty()) throw ConfigError("remote backend requires an API base URL (PERSRM_API_BASE)");
  if (config_.model.empty()) throw ConfigError("remote backend requires a model name (PERSRM_MODEL)");
  split_base(config_.api_base);
}

CompletionResult parse_chat_completion(const json& body) {
  CompletionResult result;
  const json* choices = body.contains("choices") ? &body.at("choices") : nullptr;
  if (!choices || !choices->is_array()) throw TransportError("malformed completion response: no choices", 200, false);
  std::vector<std::vector<TokenLogprob>> logprobs;
  bool have_logprobs = true;
  for (const auto& choice : *choices) {
    const json& msg = choice.value("message", json::object());
    bool filtered = choice.value("finish_reason", "") == "content_filter";
    bool refused = msg.contains("refusal") && !msg["refusal"].is_null();
    if (filtered || refused) throw RefusalError("backend refused the request", body.dump());
    const json& content = msg.value("content", json());
    result.texts.push_back(content.is_string() ? content.get<std::string>() : std::string());
    const json& lp = choice.value("logprobs", json());
    if (lp.is_object() && lp.contains("content") && lp["content"].is_array()) {
      std::vector<TokenLogprob> toks;
      for (const auto& t : lp["content"]) toks.push_back({t.value("token", ""), t.value("logprob", 0.0)});
      logprobs.push_back(std::move(toks));
    } else {
      have_logprobs = false;
    }
  }
  if (have_logprobs && !logprobs.empty()) result.token_logprobs = std::move(logprobs);
  return result;
}

CompletionResult RemoteBackend::call(const PromptRequest& request) {
  Endpoint ep = split_base(config_.api_base);
  httplib::Client client(ep.origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(config_.timeout_s);
  client.set_write_timeout(config_.timeout_s);

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  CompletionResult merged;
  merged.backend_id = id();
  std::vector<std::vector<TokenLogprob>> logprobs;
  bool all_logprobs = true;
  // Some endpoints ignore `n`; keep asking for the remainder until n candidates arrive.
  for (int round = 0; static_cast<int>(merged.texts.size()) < request.n && round < request.n; ++round) {
    json messages = json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    json payload{{"model", config_.model},
                 {"messages", messages},
                 {"temperature", request.temperature},
                 {"top_p", request.top_p},
                 {"max_tokens", request.max_tokens},
                 {"n", request.n - static_cast<int>(merged.texts.size())}};
    if (config_.request_logprobs) payload["logprobs"] = true;

    auto res = client.Post(ep.path + "/chat/completions", headers, payload.dump(), "application/json");
    if (!res) {
      throw TransportError("transport failure contacting " + ep.origin + ": " + httplib::to_string(res.error()), 0, true);
    }
    if (res->status != 200) {
      std::string msg = "HTTP " + std::to_string(res->status) + " from " + ep.origin;
      if (res->body.find("content_policy") != std::string::npos || res->body.find("content_filter") != std::string::npos)
        throw RefusalError(msg, res->body);
      throw TransportError(msg + ": " + res->body.substr(0, 200), res->status, retryable_status(res->status));
    }
    json body;
    try {
      body = json::parse(res->body);
    } catch (const json::exception&) {
      throw TransportError("non-JSON completion response", res->status, false);
    }
    CompletionResult part = parse_chat_completion(body);
    if (part.texts.empty()) throw TransportError("completion response carried no choices", res->status, false);
    for (auto& t : part.texts) merged.texts.push_back(std::move(t));
    if (part.token_logprobs) {
      for (auto& l : *part.token_logprobs) logprobs.push_back(std::move(l));
    } else {
      all_logprobs = false;
    }
  }
  merged.texts.resize(std::min<std::size_t>(merged.texts.size(), static_cast<std::size_t>(request.n)));
  if (all_logprobs && logprobs.size() >= merged.texts.size() && !logprobs.empty()) {
    logprobs.resize(merged.texts.size());
    merged.token_logprobs = std::move(logprobs);
  }
  return merged;
}

}  // namespace persrm
