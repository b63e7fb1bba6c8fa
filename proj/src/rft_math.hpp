#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace_engine.hpp"

namespace persrm {

// Sparse reward: -1 malformed, 0 tie or inverted, +1 when the positive outscored the negative.
struct RftReward {
  enum class Source { format_failure, tie_or_inverted, consistent };
  int value = -1;
  Source source = Source::format_failure;
};

std::string_view to_string(RftReward::Source s);

RftReward rft_reward(std::string_view raw_completion, Order order, ScoreRange range = {});

enum class StdMode { population, sample };

// A_i = (r_i - mean) / std over the group. Groups whose std is below 1e-8 get all-zero
// advantages. Throws DataError for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, StdMode mode = StdMode::population);

// Low-variance per-token KL estimate exp(d) - d - 1 with d = reference - current.
// Throws DataError on non-finite input.
double token_kl(double current_logprob, double reference_logprob);

struct GrpoConfig {
  double epsilon = 0.2;  // clip range
  double beta = 1e-3;    // KL weight
  int group_size = 8;

  void validate() const;
};

// Per-member token streams: logprobs under the current, behaviour (old) and reference policies.
struct MemberLogProbs {
  std::vector<double> current;
  std::vector<double> old;
  std::vector<double> reference;
};

using TokenLogProbs = std::vector<MemberLogProbs>;

struct TokenDiagnostic {
  double ratio = 1.0;
  double surrogate = 0.0;  // min(ratio * A, clip(ratio) * A)
  double kl = 0.0;
  bool clipped = false;  // clipped branch strictly below the unclipped one
};

struct GrpoResult {
  double objective = 0.0;
  double clip_fraction = 0.0;  // over all tokens
  double mean_kl = 0.0;        // same per-member averaging as the objective
  std::vector<std::vector<TokenDiagnostic>> tokens;
};

// (1/G) sum_i (1/|o_i|) sum_t { min(l_t A_i, clip(l_t, 1-eps, 1+eps) A_i) - beta * k3_t },
// l_t = exp(current - old). Throws DataError on shape mismatch or empty members.
GrpoResult grpo_objective(const TokenLogProbs& logprobs, std::span<const double> advantages, const GrpoConfig& config);

// ---------------- rollout exchange ----------------

struct RolloutGroup {
  std::string prompt_id;
  std::vector<std::string> completions;
  std::vector<double> rewards;  // provided directly when completions are absent
  std::optional<TokenLogProbs> logprobs;
};

RolloutGroup rollout_group_from_json(const json& j);

struct ScoredGroup {
  std::string prompt_id;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::optional<GrpoResult> grpo;
};

json to_json(const ScoredGroup& g);

// Rewards each completion (remapped through the group's order record), then advantages and,
// when logprobs are present, the objective.
ScoredGroup score_group(const RolloutGroup& group, Order order, const GrpoConfig& config, StdMode mode = StdMode::population,
                        ScoreRange range = {});

}  // namespace persrm
