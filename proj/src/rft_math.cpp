#include "rft_math.hpp"

#include <algorithm>
#include <cmath>

namespace persrm {

std::string_view to_string(RftReward::Source s) {
  switch (s) {
    case RftReward::Source::format_failure: return "format_failure";
    case RftReward::Source::tie_or_inverted: return "tie_or_inverted";
    case RftReward::Source::consistent: return "consistent";
  }
  return "format_failure";
}

RftReward rft_reward(std::string_view raw_completion, Order order, ScoreRange range) {
  auto parsed = parse_evaluation(raw_completion, order, range);
  if (!parsed.verdict.valid) return {-1, RftReward::Source::format_failure};
  if (parsed.evaluation->r_plus > parsed.evaluation->r_minus) return {1, RftReward::Source::consistent};
  return {0, RftReward::Source::tie_or_inverted};
}

std::vector<double> group_advantages(std::span<const double> rewards, StdMode mode) {
  const std::size_t g = rewards.size();
  if (g < 2) throw DataError("group advantages need at least 2 rewards, got " + std::to_string(g));
  for (double r : rewards)
    if (!std::isfinite(r)) throw DataError("non-finite reward in group");
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double ss = 0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  double denom = mode == StdMode::population ? static_cast<double>(g) : static_cast<double>(g - 1);
  double sd = std::sqrt(ss / denom);
  std::vector<double> adv(g, 0.0);
  if (sd < 1e-8) return adv;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double token_kl(double current_logprob, double reference_logprob) {
  if (!std::isfinite(current_logprob) || !std::isfinite(reference_logprob))
    throw DataError("token_kl: non-finite log-probability");
  double d = reference_logprob - current_logprob;
  // expm1 keeps precision for small d, where the estimate is ~ d^2/2.
  return std::expm1(d) - d;
}

void GrpoConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("grpo epsilon must be in (0, 1)");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("grpo beta must be >= 0");
  if (group_size < 2) throw ConfigError("grpo group_size must be >= 2");
}

GrpoResult grpo_objective(const TokenLogProbs& logprobs, std::span<const double> advantages, const GrpoConfig& config) {
  config.validate();
  if (logprobs.size() != advantages.size()) {
    throw DataError("grpo: " + std::to_string(advantages.size()) + " advantages for " + std::to_string(logprobs.size()) +
                    " members");
  }
  if (logprobs.empty()) throw DataError("grpo: empty group");
  GrpoResult out;
  std::size_t tokens = 0;
  std::size_t clipped = 0;
  const double lo = 1.0 - config.epsilon;
  const double hi = 1.0 + config.epsilon;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    const auto& m = logprobs[i];
    const std::size_t len = m.current.size();
    if (m.old.size() != len || m.reference.size() != len)
      throw DataError("grpo: member " + std::to_string(i) + " has mismatched logprob stream lengths");
    if (len == 0) throw DataError("grpo: member " + std::to_string(i) + " has no tokens");
    const double a = advantages[i];
    double member_sum = 0;
    double member_kl = 0;
    std::vector<TokenDiagnostic> diag(len);
    for (std::size_t t = 0; t < len; ++t) {
      if (!std::isfinite(m.current[t]) || !std::isfinite(m.old[t]))
        throw DataError("grpo: non-finite log-probability in member " + std::to_string(i));
      TokenDiagnostic& d = diag[t];
      d.ratio = std::exp(m.current[t] - m.old[t]);
      double unclipped = d.ratio * a;
      double clipped_term = std::clamp(d.ratio, lo, hi) * a;
      d.surrogate = std::min(unclipped, clipped_term);
      d.clipped = clipped_term < unclipped;
      d.kl = token_kl(m.current[t], m.reference[t]);
      member_sum += d.surrogate - config.beta * d.kl;
      member_kl += d.kl;
      clipped += d.clipped ? 1 : 0;
    }
    tokens += len;
    out.objective += member_sum / static_cast<double>(len);
    out.mean_kl += member_kl / static_cast<double>(len);
    out.tokens.push_back(std::move(diag));
  }
  const double g = static_cast<double>(logprobs.size());
  out.objective /= g;
  out.mean_kl /= g;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
  return out;
}

RolloutGroup rollout_group_from_json(const json& j) {
  try {
    RolloutGroup g;
    g.prompt_id = j.at("prompt_id").get<std::string>();
    if (j.contains("completions")) g.completions = j.at("completions").get<std::vector<std::string>>();
    if (j.contains("rewards")) g.rewards = j.at("rewards").get<std::vector<double>>();
    if (g.completions.empty() && g.rewards.empty())
      throw DataError("rollout group " + g.prompt_id + ": needs completions or rewards");
    if (j.contains("logprobs") && !j["logprobs"].is_null()) {
      const json& lp = j["logprobs"];
      auto cur = lp.at("current").get<std::vector<std::vector<double>>>();
      auto old = lp.at("old").get<std::vector<std::vector<double>>>();
      auto ref = lp.at("reference").get<std::vector<std::vector<double>>>();
      if (cur.size() != old.size() || cur.size() != ref.size())
        throw DataError("rollout group " + g.prompt_id + ": logprob streams disagree on member count");
      TokenLogProbs members(cur.size());
      for (std::size_t i = 0; i < cur.size(); ++i) members[i] = {std::move(cur[i]), std::move(old[i]), std::move(ref[i])};
      g.logprobs = std::move(members);
    }
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed rollout group: ") + e.what());
  }
}

json to_json(const ScoredGroup& g) {
  json j{{"prompt_id", g.prompt_id}, {"rewards", g.rewards}, {"advantages", g.advantages}};
  if (g.grpo) {
    j["objective"] = g.grpo->objective;
    j["clip_fraction"] = g.grpo->clip_fraction;
    j["mean_kl"] = g.grpo->mean_kl;
  } else {
    j["objective"] = nullptr;
    j["clip_fraction"] = nullptr;
    j["mean_kl"] = nullptr;
  }
  return j;
}

ScoredGroup score_group(const RolloutGroup& group, Order order, const GrpoConfig& config, StdMode mode, ScoreRange range) {
  ScoredGroup out;
  out.prompt_id = group.prompt_id;
  if (!group.completions.empty()) {
    for (const auto& c : group.completions) out.rewards.push_back(rft_reward(c, order, range).value);
  } else {
    out.rewards = group.rewards;
  }
  out.advantages = group_advantages(out.rewards, mode);
  if (group.logprobs) {
    if (group.logprobs->size() != out.rewards.size())
      throw DataError("rollout group " + group.prompt_id + ": " + std::to_string(group.logprobs->size()) +
                      " logprob members for " + std::to_string(out.rewards.size()) + " completions");
    out.grpo = grpo_objective(*group.logprobs, out.advantages, config);
  }
  return out;
}

}  // namespace persrm
