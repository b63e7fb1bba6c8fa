#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persrm {

// Plain-text template with `{name}` placeholders. Names may contain spaces ("{response a}").
class Template {
 public:
  Template() = default;
  explicit Template(std::string text);

  const std::string& text() const { return text_; }
  const std::vector<std::string>& slots() const { return slots_; }

  // Throws ConfigError when a slot has no value.
  std::string render(const std::map<std::string, std::string>& values) const;

  // Inverse of render: recovers slot values by matching the literal text between slots.
  // Fails when the literals cannot be located in order.
  std::optional<std::map<std::string, std::string>> parse(std::string_view rendered) const;

 private:
  std::string text_;
  std::vector<std::string> literals_;  // literals_.size() == slots_.size() + 1
  std::vector<std::string> slots_;
};

struct PromptSet {
  Template style_mimicking;    // {problem} {context}
  Template minor_replacement;  // {paragraph}
  Template random_style;       // {problem}
  Template reasoning_trace;    // {context} {response a} {response b}
  Template style_similarity;   // {response} {exemplar}
  Template scalar_score;       // {context} {query} {response}

  static const PromptSet& builtin();
  // Files named `<template>.txt` in `dir` replace the built-in text; missing files fall back.
  static PromptSet load(const std::filesystem::path& dir);
};

namespace detail {
const std::map<std::string, std::string>& builtin_template_texts();
}

}  // namespace persrm
