#pragma once
#include <Eigen/Dense>

#include <span>

#include "bbe/race.hpp"
#include "bbe/rng.hpp"

namespace bbe {

/// Multiplicative lognormal noise, one factor per competitor per parameter class.
struct ParamNoise {
  double step_sd{0.0};
  double preference_sd{0.0};
  double responsiveness_sd{0.0};

  bool any() const { return step_sd > 0.0 || preference_sd > 0.0 || responsiveness_sd > 0.0; }
};

/// How a bettor forms outcome beliefs: `dryruns` continuations of its own (possibly distorted)
/// model of the race, then additive noise on the estimated probabilities.
struct BeliefProfile {
  int dryruns{0};
  ParamNoise param_noise;
  double post_noise{0.0};

  void validate() const;
};

struct ProbEstimate {
  Eigen::VectorXd probs;
  int n_samples{0};
  double snapshot_time{0.0};
};

/// Deep copy of `field` with step scale, preference entries and phase levels multiplied by
/// exp(N(0, sd)) (one factor per competitor and class). Zero sd leaves the parameter untouched.
Field perturb_params(std::span<const Competitor> field, const ParamNoise& noise, Rng& rng);

/// Win counts over `dryruns` continuations of `snapshot` with Laplace smoothing (w+1)/(d+n).
/// Each continuation re-draws the per-run phase jitter from the competitor's nominal schedule.
/// d = 0 yields exactly the uniform vector.
ProbEstimate estimate_probs(const RaceState& snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                            const BeliefProfile& profile, Rng& rng);

/// Raw win counts of `n` continuations; stream seeds are derived from (base_seed, run index).
/// Summing counts over disjoint index ranges equals one call over their union.
Eigen::VectorXi dryrun_wins(const RaceState& snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                            std::uint64_t base_seed, int first, int n);

/// Adds N(0, sd) to each entry, floors at 1e-6 and renormalizes.
ProbEstimate add_post_noise(ProbEstimate est, double sd, Rng& rng);

/// 1/p clamped to [1.01, 1000]. Throws std::domain_error for p <= 0 or p > 1.
double fair_decimal_odds(double p);

} // namespace bbe
