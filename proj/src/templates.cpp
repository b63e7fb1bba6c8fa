#include "templates.hpp"

#include "error.hpp"
#include "text_util.hpp"

namespace persrm {

Template::Template(std::string text) : text_(std::move(text)) {
  std::string literal;
  std::size_t i = 0;
  while (i < text_.size()) {
    if (text_[i] == '{') {
      std::size_t close = text_.find('}', i + 1);
      std::string_view name;
      if (close != std::string::npos) name = std::string_view(text_).substr(i + 1, close - i - 1);
      bool valid = !name.empty() && name.size() <= 32 && name.front() != ' ' && name.back() != ' ';
      for (char c : name) valid = valid && ((c >= 'a' && c <= 'z') || c == ' ' || c == '_');
      if (valid) {
        literals_.push_back(std::move(literal));
        literal.clear();
        slots_.emplace_back(name);
        i = close + 1;
        continue;
      }
    }
    literal += text_[i++];
  }
  literals_.push_back(std::move(literal));
}

std::string Template::render(const std::map<std::string, std::string>& values) const {
  std::string out = literals_[0];
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    auto it = values.find(slots_[s]);
    if (it == values.end()) throw ConfigError("template slot {" + slots_[s] + "} has no value");
    out += it->second;
    out += literals_[s + 1];
  }
  return out;
}

std::optional<std::map<std::string, std::string>> Template::parse(std::string_view rendered) const {
  if (rendered.substr(0, literals_[0].size()) != literals_[0]) return std::nullopt;
  std::map<std::string, std::string> values;
  std::size_t pos = literals_[0].size();
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const std::string& next = literals_[s + 1];
    std::size_t end;
    if (s + 1 == slots_.size()) {
      // Last slot: the trailing literal must be a suffix.
      if (rendered.size() < pos + next.size() || rendered.substr(rendered.size() - next.size()) != next)
        return std::nullopt;
      end = rendered.size() - next.size();
    } else {
      end = next.empty() ? pos : rendered.find(next, pos);
      if (end == std::string_view::npos) return std::nullopt;
    }
    std::string value(rendered.substr(pos, end - pos));
    auto [it, inserted] = values.emplace(slots_[s], value);
    if (!inserted && it->second != value) return std::nullopt;
    pos = end + next.size();
  }
  if (slots_.empty() && rendered.size() != literals_[0].size()) return std::nullopt;
  return values;
}

namespace {

PromptSet from_texts(const std::map<std::string, std::string>& texts) {
  auto get = [&](const char* name) {
    auto it = texts.find(name);
    if (it == texts.end()) throw ConfigError(std::string("missing prompt template ") + name);
    return Template(it->second);
  };
  PromptSet p;
  p.style_mimicking = get("style_mimicking");
  p.minor_replacement = get("minor_replacement");
  p.random_style = get("random_style");
  p.reasoning_trace = get("reasoning_trace");
  p.style_similarity = get("style_similarity");
  p.scalar_score = get("scalar_score");
  return p;
}

}  // namespace

const PromptSet& PromptSet::builtin() {
  static const PromptSet set = from_texts(detail::builtin_template_texts());
  return set;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  std::map<std::string, std::string> texts = detail::builtin_template_texts();
  for (auto& [name, text] : texts) {
    auto path = dir / (name + ".txt");
    std::error_code ec;
    if (std::filesystem::is_regular_file(path, ec)) text = read_file(path);
  }
  return from_texts(texts);
}

}  // namespace persrm
