#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace persrm {

using json = nlohmann::json;

// ---------------- text ----------------

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool is_blank(std::string_view s);

// Whitespace-delimited tokens; punctuation stays attached to its word.
std::vector<std::string_view> split_words(std::string_view s);
std::size_t word_count(std::string_view s);

struct Truncated {
  std::string text;
  bool truncated = false;
};

// Keeps the first `cap` words, joined by single spaces. Text under the cap is returned unchanged.
Truncated truncate_words(std::string_view s, std::size_t cap);

// First sentence of `body`, capped at `max_words`.
std::string lead_sentence(std::string_view body, std::size_t max_words = 40);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---------------- hashing / seeding ----------------

std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a base seed, a label and an index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

// mt19937_64 output is fixed by the standard; the distributions in <random> are not,
// so bounded draws are done here to keep artifacts identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Uniform real in [0, 1).
  double unit();
  bool coin() { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// ---------------- files ----------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);

}  // namespace persrm
