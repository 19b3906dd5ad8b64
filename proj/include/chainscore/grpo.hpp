#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "chainscore/errors.hpp"

namespace chainscore {

inline constexpr int kDefaultGroupSize = 8;
inline constexpr double kDefaultKlBeta = 1e-3;
inline constexpr double kDefaultAdvantageEps = 1e-8;

/* One sampled completion with per-token log-probabilities under the current,
   behavior, and reference policies. */
struct Rollout {
  std::string candidate_id;
  double reward = 0.0;
  std::vector<double> logp_theta;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;

  void validate() const {
    if (logp_theta.empty())
      throw ValueError("rollout '" + candidate_id + "': empty token sequence");
    if (logp_old.size() != logp_theta.size() || logp_ref.size() != logp_theta.size())
      throw ValueError("rollout '" + candidate_id + "': log-probability length mismatch");
    if (!std::isfinite(reward))
      throw ValueError("rollout '" + candidate_id + "': non-finite reward");
    for (const auto* seq : {&logp_theta, &logp_old, &logp_ref})
      for (double v : *seq)
        if (!std::isfinite(v))
          throw ValueError("rollout '" + candidate_id + "': non-finite log-probability");
  }
};

struct CandidateGroup {
  std::string sample_id;
  std::vector<Rollout> rollouts;
};

enum class AdvantageMode {
  Value,  // z-score of the raw rewards
  Rank,   // z-score of tie-averaged ranks; robust to reward outliers
};

/* Group-relative advantage: center by the group mean, scale by population
   standard deviation plus eps. A group with identical rewards carries no
   learning signal and maps to all zeros. */
inline std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                              double eps = kDefaultAdvantageEps,
                                              AdvantageMode mode = AdvantageMode::Value) {
  if (rewards.size() < 2)
    throw ValueError("advantage normalization needs a group of at least 2");
  for (double r : rewards)
    if (!std::isfinite(r)) throw ValueError("non-finite reward in group");
  if (eps < 0.0) throw ValueError("negative advantage eps");

  std::vector<double> basis = rewards;
  if (mode == AdvantageMode::Rank) {
    /* tie-averaged ranks keep the all-equal case degenerate */
    const std::size_t n = rewards.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && rewards[order[j + 1]] == rewards[order[i]]) ++j;
      const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k <= j; ++k) basis[order[k]] = avg_rank;
      i = j + 1;
    }
  }

  const double n = static_cast<double>(basis.size());
  const double mean = std::accumulate(basis.begin(), basis.end(), 0.0) / n;
  double var = 0.0;
  for (double b : basis) var += (b - mean) * (b - mean);
  var /= n;
  const double std_dev = std::sqrt(var);

  std::vector<double> adv(basis.size(), 0.0);
  if (std_dev == 0.0) return adv;
  for (std::size_t k = 0; k < basis.size(); ++k) adv[k] = (basis[k] - mean) / (std_dev + eps);
  return adv;
}

/* Non-negative per-token KL estimate exp(d) - d - 1 with d the reference-vs-
   current log-probability gap, averaged over the sequence. Zero exactly when
   the sequences coincide. */
inline double estimate_kl(const std::vector<double>& logp_theta,
                          const std::vector<double>& logp_ref) {
  if (logp_theta.empty()) throw ValueError("KL estimate over empty sequence");
  if (logp_theta.size() != logp_ref.size())
    throw ValueError("KL estimate: sequence length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logp_theta.size(); ++i) {
    const double d = logp_ref[i] - logp_theta[i];
    acc += std::exp(d) - d - 1.0;
  }
  return acc / static_cast<double>(logp_theta.size());
}

/* Sequence-level importance ratio exp(sum logp_theta - sum logp_old). */
inline double importance_ratio(const Rollout& r) {
  const double st = std::accumulate(r.logp_theta.begin(), r.logp_theta.end(), 0.0);
  const double so = std::accumulate(r.logp_old.begin(), r.logp_old.end(), 0.0);
  return std::exp(st - so);
}

/* Mean ratio-weighted advantage minus beta times the mean KL penalty.
   A ratio that overflows poisons the whole group, so it is reported as an
   error naming the offending candidate instead of propagating a non-finite
   objective. */
inline double surrogate_objective(const CandidateGroup& group,
                                  const std::vector<double>& advantages,
                                  double beta = kDefaultKlBeta) {
  if (group.rollouts.size() < 2)
    throw ValueError("group '" + group.sample_id + "': needs at least 2 candidates");
  if (advantages.size() != group.rollouts.size())
    throw ValueError("group '" + group.sample_id + "': advantage count mismatch");
  double policy_term = 0.0;
  double kl_term = 0.0;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& r = group.rollouts[i];
    r.validate();
    const double ratio = importance_ratio(r);
    if (!std::isfinite(ratio))
      throw ValueError("group '" + group.sample_id + "': importance ratio overflow for candidate '" +
                       (r.candidate_id.empty() ? std::to_string(i) : r.candidate_id) + "'");
    policy_term += ratio * advantages[i];
    kl_term += estimate_kl(r.logp_theta, r.logp_ref);
  }
  const double n = static_cast<double>(group.rollouts.size());
  return policy_term / n - beta * (kl_term / n);
}

/* Negative log-likelihood of a forced decoding; the warm-up training loss. */
inline double sft_nll(const std::vector<double>& logp_target) {
  if (logp_target.empty()) throw ValueError("NLL over empty sequence");
  double s = 0.0;
  for (double v : logp_target) {
    if (!std::isfinite(v)) throw ValueError("non-finite log-probability in NLL");
    s += v;
  }
  return -s;
}

}  // namespace chainscore
