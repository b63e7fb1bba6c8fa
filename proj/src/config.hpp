#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "augment.hpp"
#include "eval_harness.hpp"
#include "gateway.hpp"
#include "rft_math.hpp"
#include "sft_export.hpp"
#include "trace_engine.hpp"

namespace persrm {

// Flat "section.key" -> value store. Every key has a shipped default whose JSON type fixes the
// accepted type; `mock.behaviors.<tag pattern>` keys are open-ended strings.
class Config {
 public:
  Config();  // defaults

  // TOML subset: [section] / [section.sub] headers, key = value, quoted keys, # comments,
  // strings, integers, floats, booleans and single-line arrays.
  void load_file(const std::filesystem::path& path);
  void load_text(std::string_view text, std::string_view origin = "<config>");
  // PERSRM_API_BASE, PERSRM_MODEL, PERSRM_API_KEY.
  void apply_env();
  // `value` is a TOML value; bare words are taken as strings.
  void set(std::string_view key, std::string_view value);

  const json& get(std::string_view key) const;
  std::string str(std::string_view key) const;
  double num(std::string_view key) const;
  long long integer(std::string_view key) const;
  bool flag(std::string_view key) const;

  std::map<std::string, std::string> mock_behaviors() const;

  // Resolved values with secrets removed; digest is sha256 over its compact dump.
  json resolved() const;
  std::string digest() const;

  // Cross-field checks; throws ConfigError.
  void validate() const;

 private:
  void put(const std::string& key, json value, std::string_view origin);
  std::map<std::string, json, std::less<>> values_;
};

// Parses a single TOML value; throws ConfigError.
json parse_toml_value(std::string_view text, std::string_view origin);

std::uint64_t run_seed(const Config& c);
GrpoConfig grpo_config(const Config& c);
StdMode grpo_std_mode(const Config& c);
ScoreRange score_range(const Config& c);
GenerationOptions generation_options(const Config& c);
PromptSet prompt_set(const Config& c);
AugmentOptions augment_options(const Config& c);
TraceOptions trace_options(const Config& c);
SftOptions sft_options(const Config& c);
EvalOptions eval_options(const Config& c);
JudgeOptions judge_options(const Config& c);
EvalMode eval_mode(const Config& c);
RetryPolicy retry_policy(const Config& c);
MockScript mock_script(const Config& c);
int parallelism(const Config& c);

}  // namespace persrm
