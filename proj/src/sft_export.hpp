#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "augment.hpp"
#include "trace_engine.hpp"

namespace persrm {

struct SftRecord {
  std::string pair_id;
  std::string prompt;  // rendered judge prompt; context only
  std::string target;  // serialized evaluation; the only span that carries loss
  Order order = Order::pos_first;
  std::string author_id;
  std::string split;
  std::string strategies;  // "pos/neg"
};

struct SftOptions {
  OrderPolicy order_policy = OrderPolicy::seeded_random;
  std::uint64_t seed = 0;
  int exemplar_count = 1;
  std::size_t word_cap = 512;
  PromptSet prompts = PromptSet::builtin();
};

// Throws VerificationError unless the evaluation prefers the positive (r_plus > r_minus).
SftRecord build_sft_record(const PreferencePair& pair, const Evaluation& evaluation, const SftOptions& options = {},
                           const SplitIndex* pool = nullptr);

// One line per record: {"meta":{...},"prompt":...,"target":...}. meta.target_offset is the byte
// length of prompt, i.e. where target starts in prompt + target.
json to_json(const SftRecord& r);

struct FileSummary {
  std::size_t count = 0;
  std::size_t bytes = 0;
  std::string sha256;
};

json to_json(const FileSummary& s);

FileSummary export_jsonl(const std::vector<SftRecord>& records, const std::filesystem::path& path);

struct RftPrompt {
  std::string pair_id;
  std::string prompt;
  Order order = Order::pos_first;
};

struct RftExport {
  FileSummary prompts;
  FileSummary orders;
};

// Writes `prompts_path` ({"pair_id","prompt","order"} per line) and the `orders_path` sidecar
// ({"prompt_id","order"} per line) used to remap sampled scores.
RftExport export_rft_prompts(const std::vector<PreferencePair>& pairs, const std::filesystem::path& prompts_path,
                             const std::filesystem::path& orders_path, const SftOptions& options = {},
                             const SplitIndex* pool = nullptr);

std::vector<RftPrompt> build_rft_prompts(const std::vector<PreferencePair>& pairs, const SftOptions& options = {},
                                         const SplitIndex* pool = nullptr);

// prompt_id -> order, from an rft_orders sidecar.
std::map<std::string, Order> load_order_sidecar(const std::filesystem::path& path);

}  // namespace persrm
