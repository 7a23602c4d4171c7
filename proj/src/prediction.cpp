#include "bbe/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bbe/ladder.hpp"

namespace bbe {

void BeliefProfile::validate() const {
  if (dryruns < 0) throw ConfigError("dry-run count must be >= 0");
  if (param_noise.step_sd < 0.0 || param_noise.preference_sd < 0.0 || param_noise.responsiveness_sd < 0.0 ||
      post_noise < 0.0)
    throw ConfigError("noise sds must be >= 0");
}

Field perturb_params(std::span<const Competitor> field, const ParamNoise& noise, Rng& rng) {
  Field out(field.begin(), field.end());
  auto factor = [&rng](double sd) { return sd > 0.0 ? std::exp(gaussian(rng, 0.0, sd)) : 1.0; };
  for (auto& c : out) {
    const double fs = factor(noise.step_sd);
    if (c.step.kind == StepKind::Uniform) {
      c.step.a = std::max(c.step.a * fs, 1e-9);
      c.step.b = std::max(c.step.b * fs, c.step.a);
    } else {
      c.step.a += std::log(fs);
    }
    if (noise.preference_sd > 0.0) {
      for (Eigen::Index i = 0; i < c.preference.size(); ++i)
        c.preference(i) = std::clamp(c.preference(i) * factor(noise.preference_sd), 0.0, 1.0);
    }
    const double fr = factor(noise.responsiveness_sd);
    for (auto& p : c.schedule.phases) p.level = std::max(p.level * fr, kMinMultiplier);
  }
  return out;
}

Eigen::VectorXi dryrun_wins(const RaceState& snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                            std::uint64_t base_seed, int first, int n) {
  Eigen::VectorXi wins = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(field.size()));
  const auto already = finish_order(snapshot, field);
  for (int k = first; k < first + n; ++k) {
    if (!already.empty()) {
      ++wins(already.front());
      continue;
    }
    auto streams = RaceStreams::derive(derive_seed(base_seed, "dryrun", static_cast<std::uint64_t>(k)),
                                       cfg.race_id, field);
    RaceState s = snapshot;
    for (std::size_t i = 0; i < field.size(); ++i)
      s.schedules[i] = field[i].schedule.realize(streams.per_competitor[i]);
    const auto order = run_race_from(std::move(s), cfg, field, streams);
    ++wins(order.front());
  }
  return wins;
}

ProbEstimate estimate_probs(const RaceState& snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                            const BeliefProfile& profile, Rng& rng) {
  profile.validate();
  const auto n = static_cast<Eigen::Index>(field.size());
  ProbEstimate est;
  est.snapshot_time = snapshot.t;
  est.n_samples = profile.dryruns;
  if (profile.dryruns == 0) {
    est.probs = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    return est;
  }
  if (snapshot.size() != n) throw ConfigError("snapshot is inconsistent with the race field");

  const std::uint64_t base = rng();
  Eigen::VectorXi wins;
  if (profile.param_noise.any()) {
    const Field private_field = perturb_params(field, profile.param_noise, rng);
    wins = dryrun_wins(snapshot, cfg, private_field, base, 0, profile.dryruns);
  } else {
    wins = dryrun_wins(snapshot, cfg, field, base, 0, profile.dryruns);
  }
  est.probs = (wins.cast<double>().array() + 1.0) / static_cast<double>(profile.dryruns + n);
  est.probs /= est.probs.sum();
  if (profile.post_noise > 0.0) est = add_post_noise(std::move(est), profile.post_noise, rng);
  return est;
}

ProbEstimate add_post_noise(ProbEstimate est, double sd, Rng& rng) {
  for (Eigen::Index i = 0; i < est.probs.size(); ++i)
    est.probs(i) = std::max(est.probs(i) + gaussian(rng, 0.0, sd), 1e-6);
  est.probs /= est.probs.sum();
  return est;
}

double fair_decimal_odds(double p) {
  if (!(p > 0.0) || p > 1.0) throw std::domain_error("probability must lie in (0, 1]");
  return std::clamp(1.0 / p, kMinOdds, kMaxOdds);
}

} // namespace bbe
