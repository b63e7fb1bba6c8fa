#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "gateway.hpp"

namespace persrm {

MockBehavior MockBehavior::parse(std::string_view spec) {
  spec = trim(spec);
  MockBehavior b;
  auto open = spec.find('(');
  if (open == std::string_view::npos) {
    b.name = std::string(spec);
  } else {
    if (spec.back() != ')') throw ConfigError("mock behavior '" + std::string(spec) + "': missing ')'");
    b.name = std::string(trim(spec.substr(0, open)));
    std::string_view inner = spec.substr(open + 1, spec.size() - open - 2);
    // fixed(...) keeps its argument whole, commas included.
    if (b.name == "fixed") {
      b.args.emplace_back(inner);
    } else if (!trim(inner).empty()) {
      std::size_t start = 0;
      while (true) {
        auto comma = inner.find(',', start);
        b.args.emplace_back(trim(inner.substr(start, comma == std::string_view::npos ? inner.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }
  }
  static const std::set<std::string> known{"echo",        "verbatim",   "fixed",        "style-judge",  "trace",
                                           "malformed",   "perturb",    "halve",        "score-echo",   "coin-flip",
                                           "style-overlap", "length-score", "random-score", "refuse",     "fail"};
  if (!known.count(b.name)) throw ConfigError("unknown mock behavior '" + b.name + "'");
  return b;
}

std::string MockBehavior::to_string() const {
  if (args.empty()) return name;
  std::string s = name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) s += (i ? "," : "") + args[i];
  return s + ")";
}

const MockBehavior& MockScript::lookup(std::string_view tag) const {
  const MockBehavior* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [pattern, behavior] : behaviors) {
    if (pattern == tag) return behavior;
    if (!pattern.empty() && pattern.back() == '*') {
      std::string_view prefix(pattern.data(), pattern.size() - 1);
      if (tag.substr(0, prefix.size()) == prefix && (!best || prefix.size() > best_len)) {
        best = &behavior;
        best_len = prefix.size();
      }
    }
  }
  return best ? *best : fallback;
}

void MockScript::set(const std::string& pattern, const std::string& behavior) {
  MockBehavior b = MockBehavior::parse(behavior);
  for (auto& [p, existing] : behaviors) {
    if (p == pattern) {
      existing = b;
      return;
    }
  }
  behaviors.emplace_back(pattern, b);
}

namespace {

int arg_int(const MockBehavior& b, std::size_t i, int fallback) {
  if (i >= b.args.size()) return fallback;
  try {
    return std::stoi(b.args[i]);
  } catch (const std::exception&) {
    throw ConfigError("mock behavior " + b.to_string() + ": argument " + std::to_string(i + 1) + " is not an integer");
  }
}

std::string evaluation_text(int a, int b, const std::string& analysis) {
  return "<criteria>\nSpecific Criteria:\n1. Personal Style Adherence\n2. Tone and Voice Consistency\n"
         "3. Language Fluency and Coherence\n</criteria>\n\n<eval>\nAnalysis: " +
         analysis + "\n</eval>\n\n<scores>\nScores: [[" + std::to_string(a) + "," + std::to_string(b) + "]]</scores>";
}

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  for (auto w : split_words(text)) {
    std::string core;
    for (char c : w)
      if (std::isalnum(static_cast<unsigned char>(c))) core += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!core.empty()) out.insert(core);
  }
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

int marker_or_hash_score(std::string_view response) {
  auto pos = response.find("[score=");
  if (pos != std::string_view::npos) {
    int v = 0;
    std::size_t i = pos + 7;
    bool digits = false;
    while (i < response.size() && response[i] >= '0' && response[i] <= '9' && v < 100) {
      v = v * 10 + (response[i++] - '0');
      digits = true;
    }
    if (digits && i < response.size() && response[i] == ']') return std::clamp(v, 1, 10);
  }
  return 1 + static_cast<int>(fnv1a64(response) % 10);
}

std::string substitute(std::string_view word) {
  static const std::map<std::string, std::string, std::less<>> kSynonyms{
      {"big", "large"},     {"small", "little"},  {"quick", "fast"},      {"fast", "rapid"},   {"good", "fine"},
      {"bad", "poor"},      {"happy", "glad"},    {"said", "stated"},     {"very", "really"},  {"often", "frequently"},
      {"new", "fresh"},     {"old", "aged"},      {"strong", "sturdy"},   {"quickly", "swiftly"}, {"began", "started"},
      {"large", "big"},     {"major", "key"},     {"important", "crucial"}, {"show", "display"}, {"make", "create"},
  };
  std::size_t b = 0;
  std::size_t e = word.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(word[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(word[e - 1]))) --e;
  std::string core(word.substr(b, e - b));
  auto it = kSynonyms.find(to_lower_ascii(core));
  std::string replacement = it != kSynonyms.end() ? it->second : core + "ly";
  return std::string(word.substr(0, b)) + replacement + std::string(word.substr(e));
}

}  // namespace

MockBackend::MockBackend(MockScript script, PromptSet prompts) : script_(std::move(script)), prompts_(std::move(prompts)) {}

CompletionResult MockBackend::call(const PromptRequest& request) {
  const MockBehavior& behavior = script_.lookup(request.tag);
  if (behavior.name == "refuse") throw RefusalError("mock refusal", R"({"error":{"code":"content_filter"}})");
  if (behavior.name == "fail") {
    int status = arg_int(behavior, 0, 503);
    throw TransportError("mock transport failure (status " + std::to_string(status) + ")", status,
                         status == 0 || status == 429 || status >= 500);
  }
  CompletionResult result;
  result.backend_id = id();
  for (int i = 0; i < request.n; ++i) result.texts.push_back(reply(request, behavior, i));
  return result;
}

std::string MockBackend::reply(const PromptRequest& request, const MockBehavior& behavior, int index) const {
  const std::string& name = behavior.name;
  std::uint64_t stream = derive_seed(derive_seed(script_.seed, request.system), request.user, static_cast<std::uint64_t>(index));

  auto paragraph = [&]() -> std::string {
    auto slots = prompts_.minor_replacement.parse(request.user);
    return slots ? slots->at("paragraph") : request.user;
  };
  auto judge_slots = [&]() {
    auto slots = prompts_.reasoning_trace.parse(request.user);
    if (!slots) throw TransportError("mock: request is not a judge prompt", 400, false);
    return *slots;
  };
  auto scalar_response = [&]() -> std::string {
    auto slots = prompts_.scalar_score.parse(request.user);
    return slots ? slots->at("response") : request.user;
  };

  if (name == "echo") return request.user;
  if (name == "verbatim") return paragraph();
  if (name == "fixed") return behavior.args.empty() ? std::string() : behavior.args[0];
  if (name == "style-judge") return behavior.args.empty() ? std::string("5") : behavior.args[0];
  if (name == "trace") {
    int a = arg_int(behavior, 0, 9);
    int b = arg_int(behavior, 1, 7);
    return evaluation_text(a, b, "Response A and Response B were compared against the context exemplar.");
  }
  if (name == "malformed") {
    return "<criteria>\nSpecific Criteria: tone\n</criteria>\n<eval>\nAnalysis: the scores section is missing.\n</eval>";
  }
  if (name == "perturb") {
    std::string text = paragraph();
    int k = arg_int(behavior, 0, 5);
    auto words = split_words(text);
    std::vector<std::size_t> positions(words.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    Rng rng(stream);
    rng.shuffle(positions);
    positions.resize(std::min<std::size_t>(positions.size(), static_cast<std::size_t>(std::max(k, 0))));
    std::sort(positions.begin(), positions.end());
    std::string out;
    std::size_t cursor = 0;
    for (std::size_t p : positions) {
      std::size_t offset = static_cast<std::size_t>(words[p].data() - text.data());
      out += text.substr(cursor, offset - cursor);
      out += substitute(words[p]);
      cursor = offset + words[p].size();
    }
    out += text.substr(cursor);
    return out;
  }
  if (name == "halve") {
    std::string text = paragraph();
    return truncate_words(text, word_count(text) / 2).text;
  }
  if (name == "score-echo") {
    auto slots = judge_slots();
    int bias = arg_int(behavior, 0, 0);
    int a = std::clamp(marker_or_hash_score(slots["response a"]) + bias, 1, 10);
    int b = marker_or_hash_score(slots["response b"]);
    return evaluation_text(a, b, "Each response was scored on its own stylistic evidence.");
  }
  if (name == "coin-flip") {
    Rng rng(stream);
    return rng.coin() ? evaluation_text(9, 3, "Response A reads closer to the context.")
                      : evaluation_text(3, 9, "Response B reads closer to the context.");
  }
  if (name == "style-overlap") {
    auto slots = judge_slots();
    auto context = word_set(slots["context"]);
    double ja = jaccard(word_set(slots["response a"]), context);
    double jb = jaccard(word_set(slots["response b"]), context);
    double top = std::max(ja, jb);
    auto score = [&](double j) { return top <= 0.0 ? 5 : std::clamp(1 + static_cast<int>(std::lround(9.0 * j / top)), 1, 10); };
    char analysis[160];
    std::snprintf(analysis, sizeof analysis,
                  "Vocabulary overlap with the context is %.3f for Response A and %.3f for Response B.", ja, jb);
    return evaluation_text(score(ja), score(jb), analysis);
  }
  if (name == "length-score") return std::to_string(word_count(scalar_response()));
  if (name == "random-score") {
    Rng rng(stream);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", rng.unit() * 10.0);
    return buf;
  }
  throw ConfigError("mock behavior '" + name + "' cannot produce text");
}

}  // namespace persrm
