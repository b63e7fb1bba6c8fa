#include "config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>

namespace persrm {

namespace {

const char* kBehaviorPrefix = "mock.behaviors.";

json defaults() {
  json d = json::object();
  auto& m = d;
  m["run.seed"] = 0;

  m["augment.pairs_per_author"] = 1;
  m["augment.exemplar_count"] = 1;
  m["augment.word_cap"] = 512;
  m["augment.max_pairs"] = 0;
  m["augment.splits"] = json::array({"train"});
  m["augment.confounding_same_exemplar"] = true;
  m["augment.min_words"] = 20;
  m["augment.min_substitutions"] = 1;
  m["augment.max_substitutions"] = 6;
  m["augment.max_word_delta"] = 2;
  for (auto p : {"intra_author", "lexical_perturbation"})
    for (auto n : {"cross_author", "random_style", "confounding"})
      m[std::string("augment.weights.") + p + "." + n] = 1.0;

  m["trace.exemplar_count"] = 1;
  m["trace.order_policy"] = "seeded_random";
  m["trace.score_min"] = 1;
  m["trace.score_max"] = 10;

  m["export.order_policy"] = "seeded_random";
  m["export.exemplar_count"] = 1;
  m["export.rft_source"] = "all";

  m["grpo.epsilon"] = 0.2;
  m["grpo.beta"] = 1e-3;
  m["grpo.group_size"] = 8;
  m["grpo.std"] = "population";

  m["eval.mode"] = "generative";
  m["eval.exemplar_count"] = 1;
  m["eval.order_policy"] = "single";
  m["eval.single_order"] = "seeded_random";
  m["eval.base_order"] = "pos_first";
  m["eval.dump_records"] = false;

  m["gateway.backend"] = "mock";
  m["gateway.parallelism"] = 1;
  m["gateway.max_attempts"] = 3;
  m["gateway.backoff_ms"] = 1000;
  m["gateway.timeout_s"] = 120;
  m["gateway.temperature"] = 1.0;
  m["gateway.top_p"] = 1.0;
  m["gateway.max_tokens"] = 1024;
  m["gateway.api_base"] = "";
  m["gateway.model"] = "";
  m["gateway.api_key"] = "";
  m["gateway.audit"] = true;

  m["mock.seed"] = 0;
  m["mock.default"] = "echo";

  m["templates.dir"] = "";

  // Trainer-side hyperparameters; recorded in manifests, not acted on here.
  m["trainer.sft.batch_size"] = 64;
  m["trainer.sft.learning_rate"] = 5e-6;
  m["trainer.sft.epochs"] = 1;
  m["trainer.rft.batch_size"] = 32;
  m["trainer.rft.learning_rate"] = 3e-7;
  m["trainer.rft.temperature"] = 1.0;
  m["trainer.rft.top_p"] = 1.0;
  m["trainer.rft.rollouts_per_prompt"] = 8;
  m["trainer.rft.kl_coef"] = 1e-3;
  return d;
}

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  std::string_view origin;

  bool done() const { return i >= s.size(); }
  char peek() const { return done() ? '\0' : s[i]; }
  void skip_ws() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(std::string(origin) + ": " + what);
  }
};

std::string parse_basic_string(Cursor& c) {
  ++c.i;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) c.fail("unterminated string");
    char ch = c.s[c.i++];
    if (ch == '"') return out;
    if (ch != '\\') {
      out += ch;
      continue;
    }
    if (c.done()) c.fail("unterminated escape");
    char e = c.s[c.i++];
    switch (e) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default: c.fail(std::string("unsupported escape \\") + e);
    }
  }
}

std::string parse_literal_string(Cursor& c) {
  ++c.i;
  auto end = c.s.find('\'', c.i);
  if (end == std::string_view::npos) c.fail("unterminated string");
  std::string out(c.s.substr(c.i, end - c.i));
  c.i = end + 1;
  return out;
}

json parse_value(Cursor& c) {
  c.skip_ws();
  char ch = c.peek();
  if (ch == '"') return parse_basic_string(c);
  if (ch == '\'') return parse_literal_string(c);
  if (ch == '[') {
    ++c.i;
    json arr = json::array();
    while (true) {
      c.skip_ws();
      if (c.peek() == ']') {
        ++c.i;
        return arr;
      }
      arr.push_back(parse_value(c));
      c.skip_ws();
      if (c.peek() == ',') {
        ++c.i;
      } else if (c.peek() != ']') {
        c.fail("expected ',' or ']' in array");
      }
    }
  }
  std::size_t start = c.i;
  while (!c.done() && c.s[c.i] != ',' && c.s[c.i] != ']' && c.s[c.i] != ' ' && c.s[c.i] != '\t' && c.s[c.i] != '#')
    ++c.i;
  std::string word(c.s.substr(start, c.i - start));
  if (word.empty()) c.fail("missing value");
  if (word == "true") return true;
  if (word == "false") return false;
  std::string digits;
  for (char d : word)
    if (d != '_') digits += d;
  char* end = nullptr;
  bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
  if (!is_float) {
    errno = 0;
    long long v = std::strtoll(digits.c_str(), &end, 10);
    if (end && *end == '\0' && errno == 0 && !digits.empty()) return v;
  } else {
    double v = std::strtod(digits.c_str(), &end);
    if (end && *end == '\0' && std::isfinite(v)) return v;
  }
  c.fail("cannot parse value '" + word + "'");
}

void expect_line_end(Cursor& c) {
  c.skip_ws();
  if (!c.done() && c.peek() != '#') c.fail("unexpected trailing text");
}

std::string parse_key(Cursor& c) {
  std::string key;
  while (true) {
    c.skip_ws();
    if (c.peek() == '"') {
      key += parse_basic_string(c);
    } else {
      std::size_t start = c.i;
      while (!c.done() && (std::isalnum(static_cast<unsigned char>(c.s[c.i])) || c.s[c.i] == '_' || c.s[c.i] == '-')) ++c.i;
      if (start == c.i) c.fail("expected a key");
      key += c.s.substr(start, c.i - start);
    }
    c.skip_ws();
    if (c.peek() != '.') return key;
    ++c.i;
    key += '.';
  }
}

bool same_kind(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  return false;
}

}  // namespace

json parse_toml_value(std::string_view text, std::string_view origin) {
  Cursor c{text, 0, origin};
  json v = parse_value(c);
  expect_line_end(c);
  return v;
}

Config::Config() {
  const json d = defaults();
  for (auto& [k, v] : d.items()) values_.emplace(k, v);
}

void Config::put(const std::string& key, json value, std::string_view origin) {
  if (key.rfind(kBehaviorPrefix, 0) == 0) {
    if (!value.is_string()) throw ConfigError(std::string(origin) + ": " + key + " must be a string");
    MockBehavior::parse(value.get<std::string>());  // reject typos early
    values_[key] = std::move(value);
    return;
  }
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(std::string(origin) + ": unknown config key '" + key + "'");
  if (!same_kind(it->second, value))
    throw ConfigError(std::string(origin) + ": " + key + " expects a value like " + it->second.dump());
  if (it->second.is_number_float()) value = value.get<double>();
  it->second = std::move(value);
}

void Config::load_text(std::string_view text, std::string_view origin) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::string where = std::string(origin) + ":" + std::to_string(line_no);
    Cursor c{line, 0, where};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.peek() == '[') {
      ++c.i;
      section = parse_key(c);
      if (c.peek() != ']') c.fail("expected ']'");
      ++c.i;
      expect_line_end(c);
      continue;
    }
    std::string key = parse_key(c);
    if (c.peek() != '=') c.fail("expected '='");
    ++c.i;
    json value = parse_value(c);
    expect_line_end(c);
    put(section.empty() ? key : section + "." + key, std::move(value), where);
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  load_text(text, path.string());
}

void Config::apply_env() {
  const std::pair<const char*, const char*> vars[] = {
      {"PERSRM_API_BASE", "gateway.api_base"}, {"PERSRM_MODEL", "gateway.model"}, {"PERSRM_API_KEY", "gateway.api_key"}};
  for (auto [var, key] : vars) {
    if (const char* v = std::getenv(var); v && *v) put(key, std::string(v), var);
  }
}

void Config::set(std::string_view key, std::string_view value) {
  std::string k(trim(key));
  std::string origin = "--set " + k;
  json v;
  try {
    v = parse_toml_value(value, origin);
  } catch (const ConfigError&) {
    v = std::string(value);
  }
  auto it = values_.find(k);
  bool wants_string = (it != values_.end() && it->second.is_string()) || k.rfind(kBehaviorPrefix, 0) == 0;
  if (wants_string && !v.is_string()) v = std::string(value);
  put(k, std::move(v), origin);
}

const json& Config::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

std::string Config::str(std::string_view key) const { return get(key).get<std::string>(); }
double Config::num(std::string_view key) const { return get(key).get<double>(); }
long long Config::integer(std::string_view key) const { return get(key).get<long long>(); }
bool Config::flag(std::string_view key) const { return get(key).get<bool>(); }

std::map<std::string, std::string> Config::mock_behaviors() const {
  std::map<std::string, std::string> out;
  std::string_view prefix(kBehaviorPrefix);
  for (auto it = values_.lower_bound(prefix); it != values_.end() && it->first.rfind(prefix, 0) == 0; ++it)
    out.emplace(it->first.substr(prefix.size()), it->second.get<std::string>());
  return out;
}

json Config::resolved() const {
  json out = json::object();
  for (const auto& [k, v] : values_) {
    if (k == "gateway.api_key") continue;
    out[k] = v;
  }
  return out;
}

std::string Config::digest() const { return sha256_hex(resolved().dump()); }

void Config::validate() const {
  grpo_config(*this).validate();
  grpo_std_mode(*this);
  augment_options(*this).mix.validate();
  trace_options(*this);
  sft_options(*this);
  eval_options(*this);
  eval_mode(*this);
  retry_policy(*this);
  mock_script(*this);
  if (parallelism(*this) < 1) throw ConfigError("gateway.parallelism must be >= 1");
  auto backend = str("gateway.backend");
  if (backend != "mock" && backend != "remote") throw ConfigError("gateway.backend must be mock or remote");
  auto source = str("export.rft_source");
  if (source != "all" && source != "filtered") throw ConfigError("export.rft_source must be all or filtered");
  PromptRequest probe;
  auto gen = generation_options(*this);
  probe.temperature = gen.temperature;
  probe.top_p = gen.top_p;
  probe.max_tokens = gen.max_tokens;
  probe.validate();
  auto dir = str("templates.dir");
  if (!dir.empty() && !std::filesystem::is_directory(dir)) throw ConfigError("templates.dir " + dir + " does not exist");
}

// ---------------- module option builders ----------------

namespace {

int positive_int(const Config& c, std::string_view key) {
  long long v = c.integer(key);
  if (v < 1 || v > 1'000'000) throw ConfigError(std::string(key) + " must be a positive integer");
  return static_cast<int>(v);
}

std::size_t non_negative(const Config& c, std::string_view key) {
  long long v = c.integer(key);
  if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

OrderPolicy order_policy(const Config& c, std::string_view key) {
  auto p = parse_order_policy(c.str(key));
  if (!p) throw ConfigError(std::string(key) + " must be pos_first, neg_first or seeded_random");
  return *p;
}

}  // namespace

std::uint64_t run_seed(const Config& c) { return static_cast<std::uint64_t>(c.integer("run.seed")); }

GrpoConfig grpo_config(const Config& c) {
  GrpoConfig g;
  g.epsilon = c.num("grpo.epsilon");
  g.beta = c.num("grpo.beta");
  g.group_size = static_cast<int>(c.integer("grpo.group_size"));
  g.validate();
  return g;
}

StdMode grpo_std_mode(const Config& c) {
  auto s = c.str("grpo.std");
  if (s == "population") return StdMode::population;
  if (s == "sample") return StdMode::sample;
  throw ConfigError("grpo.std must be population or sample");
}

ScoreRange score_range(const Config& c) {
  ScoreRange r{static_cast<int>(c.integer("trace.score_min")), static_cast<int>(c.integer("trace.score_max"))};
  if (r.min >= r.max) throw ConfigError("trace.score_min must be below trace.score_max");
  return r;
}

GenerationOptions generation_options(const Config& c) {
  GenerationOptions g;
  g.temperature = c.num("gateway.temperature");
  g.top_p = c.num("gateway.top_p");
  g.max_tokens = positive_int(c, "gateway.max_tokens");
  return g;
}

PromptSet prompt_set(const Config& c) {
  auto dir = c.str("templates.dir");
  return dir.empty() ? PromptSet::builtin() : PromptSet::load(dir);
}

int parallelism(const Config& c) { return positive_int(c, "gateway.parallelism"); }

AugmentOptions augment_options(const Config& c) {
  AugmentOptions o;
  o.mix.seed = run_seed(c);
  o.mix.pairs_per_author = positive_int(c, "augment.pairs_per_author");
  const char* pos[] = {"intra_author", "lexical_perturbation"};
  const char* neg[] = {"cross_author", "random_style", "confounding"};
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t n = 0; n < 3; ++n)
      o.mix.weights[p][n] = c.num(std::string("augment.weights.") + pos[p] + "." + neg[n]);
  o.splits.clear();
  for (const auto& s : c.get("augment.splits")) {
    auto split = s.is_string() ? parse_split(s.get<std::string>()) : std::nullopt;
    if (!split) throw ConfigError("augment.splits: unknown split " + s.dump());
    o.splits.push_back(*split);
  }
  if (o.splits.empty()) throw ConfigError("augment.splits must not be empty");
  o.exemplar_count = positive_int(c, "augment.exemplar_count");
  o.word_cap = static_cast<std::size_t>(positive_int(c, "augment.word_cap"));
  o.max_pairs = non_negative(c, "augment.max_pairs");
  o.confounding_same_exemplar = c.flag("augment.confounding_same_exemplar");
  o.parallelism = parallelism(c);
  o.gen = generation_options(c);
  o.bounds.min_words = non_negative(c, "augment.min_words");
  o.bounds.min_substitutions = non_negative(c, "augment.min_substitutions");
  o.bounds.max_substitutions = non_negative(c, "augment.max_substitutions");
  o.bounds.max_abs_word_delta = non_negative(c, "augment.max_word_delta");
  if (o.bounds.min_substitutions > o.bounds.max_substitutions)
    throw ConfigError("augment.min_substitutions exceeds augment.max_substitutions");
  o.prompts = prompt_set(c);
  return o;
}

TraceOptions trace_options(const Config& c) {
  TraceOptions o;
  o.exemplar_count = positive_int(c, "trace.exemplar_count");
  o.order_policy = order_policy(c, "trace.order_policy");
  o.seed = run_seed(c);
  o.range = score_range(c);
  o.gen = generation_options(c);
  o.word_cap = static_cast<std::size_t>(positive_int(c, "augment.word_cap"));
  o.parallelism = parallelism(c);
  o.prompts = prompt_set(c);
  return o;
}

SftOptions sft_options(const Config& c) {
  SftOptions o;
  o.order_policy = order_policy(c, "export.order_policy");
  o.seed = run_seed(c);
  o.exemplar_count = positive_int(c, "export.exemplar_count");
  o.word_cap = static_cast<std::size_t>(positive_int(c, "augment.word_cap"));
  o.prompts = prompt_set(c);
  return o;
}

EvalMode eval_mode(const Config& c) {
  auto m = parse_eval_mode(c.str("eval.mode"));
  if (!m) throw ConfigError("eval.mode must be generative or scalar");
  return *m;
}

EvalOptions eval_options(const Config& c) {
  EvalOptions o;
  o.exemplar_count = positive_int(c, "eval.exemplar_count");
  auto p = parse_eval_order_policy(c.str("eval.order_policy"));
  if (!p) throw ConfigError("eval.order_policy must be single or both_orders_mean");
  o.order_policy = *p;
  o.single_order = order_policy(c, "eval.single_order");
  auto base = parse_order(c.str("eval.base_order"));
  if (!base) throw ConfigError("eval.base_order must be pos_first or neg_first");
  o.base_order = *base;
  o.seed = run_seed(c);
  o.range = score_range(c);
  o.gen = generation_options(c);
  o.word_cap = static_cast<std::size_t>(positive_int(c, "augment.word_cap"));
  o.parallelism = parallelism(c);
  o.prompts = prompt_set(c);
  return o;
}

JudgeOptions judge_options(const Config& c) {
  JudgeOptions o;
  o.gen = generation_options(c);
  o.parallelism = parallelism(c);
  o.prompts = prompt_set(c);
  return o;
}

RetryPolicy retry_policy(const Config& c) {
  RetryPolicy r;
  r.max_attempts = positive_int(c, "gateway.max_attempts");
  long long backoff = c.integer("gateway.backoff_ms");
  if (backoff < 0) throw ConfigError("gateway.backoff_ms must be >= 0");
  r.base_backoff = std::chrono::milliseconds(backoff);
  return r;
}

MockScript mock_script(const Config& c) {
  MockScript s;
  s.seed = static_cast<std::uint64_t>(c.integer("mock.seed"));
  s.fallback = MockBehavior::parse(c.str("mock.default"));
  for (const auto& [pattern, behavior] : c.mock_behaviors()) s.set(pattern, behavior);
  return s;
}

}  // namespace persrm
