#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace persrm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

std::shared_ptr<Backend> make_backend(const Config& config);

// Gateway per config; audits into `audit_path` when gateway.audit is on.
std::unique_ptr<Gateway> make_gateway(const Config& config, const std::optional<std::filesystem::path>& audit_path);

struct NamedInput {
  std::string name;
  std::filesystem::path path;
};

// Runs `body` against `<out>.staging`, writes the manifest there and renames it to `out`. On any
// exception the staging directory is moved to `<out>.quarantine` and the exception propagates.
// Returns the summary the body produced.
using StageBody = std::function<json(const std::filesystem::path& staging)>;
json run_stage(const std::string& subcommand, const Config& config, const std::vector<NamedInput>& inputs,
               const std::filesystem::path& out, const StageBody& body);

std::filesystem::path quarantine_path(const std::filesystem::path& out);

// Stage entry points. Each returns a JSON summary; paths in `out` follow the layout in the README.
json stage_ingest(const Config& c, const std::filesystem::path& root, const std::filesystem::path& manifest,
                  const std::filesystem::path& out);
json stage_split(const Config& c, const std::filesystem::path& corpus, const std::optional<std::filesystem::path>& spec,
                 const std::filesystem::path& out);
json stage_verify_split(const Config& c, const std::filesystem::path& corpus, const std::filesystem::path& splits,
                        const std::filesystem::path& out);
json stage_augment(const Config& c, const std::filesystem::path& corpus, const std::filesystem::path& splits,
                   const std::filesystem::path& out);

struct PoolPaths {
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> splits;
};

json stage_trace(const Config& c, const std::filesystem::path& pairs, const PoolPaths& pool,
                 const std::filesystem::path& out);
json stage_filter(const Config& c, const std::filesystem::path& traces, const std::filesystem::path& out);
json stage_export_sft(const Config& c, const std::filesystem::path& pairs, const std::filesystem::path& traces,
                      const PoolPaths& pool, const std::filesystem::path& out);
json stage_export_rft(const Config& c, const std::filesystem::path& pairs,
                      const std::optional<std::filesystem::path>& traces, const PoolPaths& pool,
                      const std::filesystem::path& out);
json stage_score_rollouts(const Config& c, const std::filesystem::path& rollouts,
                          const std::optional<std::filesystem::path>& orders, const std::filesystem::path& out);
json stage_eval(const Config& c, const std::filesystem::path& pairs, const PoolPaths& pool,
                const std::filesystem::path& out);
json stage_judge_quality(const Config& c, const std::filesystem::path& pairs, const std::filesystem::path& out);

// Human-readable summary of a finished output directory. Throws DataError without a manifest.
std::string render_report(const std::filesystem::path& dir);

}  // namespace persrm
