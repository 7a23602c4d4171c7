#include "bbe/race.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bbe {

// ---------------------------------------------------------------------------
// StepDistribution

double StepDistribution::mean() const {
  switch (kind) {
    case StepKind::Uniform: return 0.5 * (a + b);
    case StepKind::LogNormal: return std::exp(a + 0.5 * b * b);
  }
  return 0.0;
}

double StepDistribution::draw(Rng& rng) const {
  switch (kind) {
    case StepKind::Uniform: return bbe::uniform(rng, a, b);
    case StepKind::LogNormal: return std::exp(gaussian(rng, a, b));
  }
  return 0.0;
}

void StepDistribution::validate() const {
  if (kind == StepKind::Uniform) {
    if (!(a > 0.0) || !(b >= a) || !std::isfinite(b))
      throw ConfigError("uniform step distribution needs 0 < lo <= hi");
  } else {
    if (!std::isfinite(a) || !(b >= 0.0) || !std::isfinite(b))
      throw ConfigError("lognormal step distribution needs finite mu and sigma >= 0");
  }
}

// ---------------------------------------------------------------------------
// PhaseSchedule

double PhaseSchedule::level_at(double race_frac) const {
  for (const auto& p : phases) {
    if (race_frac < p.end_frac) return p.level;
  }
  return phases.back().level;
}

PhaseSchedule PhaseSchedule::realize(Rng& rng) const {
  PhaseSchedule out = *this;
  const std::size_t n = phases.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double b = truncated_gaussian(rng, phases[i].end_frac, boundary_sd);
    out.phases[i].end_frac = std::clamp(b, 1e-3, 1.0 - 1e-3);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double l = truncated_gaussian(rng, phases[i].level, level_sd);
    out.phases[i].level = std::max(l, kMinMultiplier);
  }
  // Jitter may reorder neighbouring boundaries; keep the level sequence and re-sort the cut points.
  std::vector<double> cuts;
  for (std::size_t i = 0; i + 1 < n; ++i) cuts.push_back(out.phases[i].end_frac);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < n; ++i) out.phases[i].end_frac = cuts[i];
  out.phases.back().end_frac = 1.0;
  return out;
}

void PhaseSchedule::validate() const {
  if (phases.empty()) throw ConfigError("phase schedule must contain at least one phase");
  if (phases.back().end_frac != 1.0) throw ConfigError("final phase must end at race fraction 1.0");
  double prev = 0.0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const auto& p = phases[i];
    if (i + 1 < phases.size() && !(p.end_frac > prev && p.end_frac < 1.0))
      throw ConfigError("phase boundaries must be strictly increasing within (0,1)");
    if (!(p.level >= 0.7 && p.level <= 1.0)) throw ConfigError("phase levels must lie in [0.7, 1.0]");
    prev = p.end_frac;
  }
  if (boundary_sd < 0.0 || level_sd < 0.0) throw ConfigError("phase jitter sd must be >= 0");
}

// ---------------------------------------------------------------------------
// Competitor / config

void Competitor::validate(Eigen::Index n_factors) const {
  step.validate();
  schedule.validate();
  if (preference.size() != n_factors)
    throw ConfigError("competitor '" + name + "': preference vector length does not match race factors");
  if ((preference.array() < 0.0).any() || (preference.array() > 1.0).any())
    throw ConfigError("competitor '" + name + "': preference entries must lie in [0,1]");
  if (theta_ahead < 0.0 || theta_behind < 0.0) throw ConfigError("interaction thresholds must be >= 0");
  if (spur_boost < 1.0) throw ConfigError("spur boost must be >= 1");
  if (block_prob < 0.0 || block_prob > 1.0 || spur_prob < 0.0 || spur_prob > 1.0)
    throw ConfigError("block/spur probabilities must lie in [0,1]");
}

Competitor random_competitor(int id, std::string name, const StepDistribution& step, Eigen::Index n_factors,
                             Rng& rng, double boundary_sd, double level_sd) {
  Competitor c;
  c.id = id;
  c.name = std::move(name);
  c.step = step;
  c.preference = Eigen::VectorXd(n_factors);
  for (Eigen::Index i = 0; i < n_factors; ++i) c.preference(i) = canonical(rng);

  const auto n_boundaries = static_cast<std::size_t>(uniform_int(rng, 2, 4));
  std::vector<double> cuts(n_boundaries);
  for (auto& x : cuts) x = uniform(rng, 0.05, 0.95);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  c.schedule.phases.clear();
  for (double x : cuts) c.schedule.phases.push_back({x, uniform(rng, 0.7, 1.0)});
  c.schedule.phases.push_back({1.0, uniform(rng, 0.7, 1.0)});
  c.schedule.boundary_sd = boundary_sd;
  c.schedule.level_sd = level_sd;
  return c;
}

void RaceConfig::validate(std::span<const Competitor> field) const {
  if (!(track_length > 0.0)) throw ConfigError("track length must be > 0");
  if (!(tick > 0.0)) throw ConfigError("tick must be > 0");
  if (field.empty()) throw ConfigError("race field is empty");
  if ((factors.array() < 0.0).any() || (factors.array() > 1.0).any())
    throw ConfigError("race factors must lie in [0,1]");
  if (start_positions.size() != 0) {
    if (start_positions.size() != static_cast<Eigen::Index>(field.size()))
      throw ConfigError("start positions must have one entry per competitor");
    if ((start_positions.array() < 0.0).any() || (start_positions.array() >= track_length).any())
      throw ConfigError("start positions must lie in [0, track length)");
  }
  if (betting_close.nth_finisher < 0 || betting_close.nth_finisher > static_cast<int>(field.size()))
    throw ConfigError("betting close finisher index out of range");
  if (!(pref_k > 0.0)) throw ConfigError("preference constant k must be > 0");
  std::vector<int> ids;
  for (const auto& c : field) {
    c.validate(factors.size());
    ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("competitor ids must be unique");
}

int RaceState::finished_count() const {
  return static_cast<int>(std::count_if(finish_time.begin(), finish_time.end(),
                                        [](const auto& f) { return f.has_value(); }));
}

RaceStreams RaceStreams::derive(std::uint64_t seed, std::string_view race_id, std::span<const Competitor> field) {
  RaceStreams s;
  s.per_competitor.reserve(field.size());
  const std::uint64_t race_key = hash_tag(race_id);
  for (const auto& c : field)
    s.per_competitor.emplace_back(derive_seed(seed, "competitor", race_key, static_cast<std::uint64_t>(c.id)));
  return s;
}

// ---------------------------------------------------------------------------
// Kernel

std::optional<Neighbour> nearest_ahead(Eigen::Index c, const Eigen::Ref<const Eigen::VectorXd>& d) {
  std::optional<Neighbour> best;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (i == c) continue;
    const double gap = d(i) - d(c);
    if (gap > 0.0 && (!best || gap < best->gap)) best = Neighbour{i, gap};
  }
  return best;
}

std::optional<Neighbour> nearest_behind(Eigen::Index c, const Eigen::Ref<const Eigen::VectorXd>& d) {
  std::optional<Neighbour> best;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (i == c) continue;
    const double gap = d(c) - d(i);
    if (gap > 0.0 && (!best || gap < best->gap)) best = Neighbour{i, gap};
  }
  return best;
}

double preference_coeff(const Competitor& comp, const Eigen::Ref<const Eigen::VectorXd>& factors,
                        PreferenceForm form, double k) {
  if (comp.preference.size() != factors.size())
    throw ConfigError("preference/factor dimension mismatch for competitor '" + comp.name + "'");
  if (factors.size() == 0) return 1.0;
  const double dist = (factors - comp.preference).norm();
  const double raw = form == PreferenceForm::Normalized
                         ? 1.0 - dist / std::sqrt(static_cast<double>(factors.size()))
                         : (k - dist) / k;
  return std::clamp(raw, kMinMultiplier, 1.0);
}

namespace {

constexpr Eigen::Index kNone = -1;

// Nearest competitors strictly ahead of and behind c, found in one pass.
struct Neighbours {
  Eigen::Index ahead{kNone};
  double ahead_gap{0.0};
  Eigen::Index behind{kNone};
  double behind_gap{0.0};
};

Neighbours neighbours(Eigen::Index c, const double* d, Eigen::Index n) {
  Neighbours out;
  const double dc = d[c];
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gap = d[i] - dc;
    if (gap > 0.0) {
      if (out.ahead == kNone || gap < out.ahead_gap) {
        out.ahead = i;
        out.ahead_gap = gap;
      }
    } else if (gap < 0.0) {
      if (out.behind == kNone || -gap < out.behind_gap) {
        out.behind = i;
        out.behind_gap = -gap;
      }
    }
  }
  return out;
}

double responsiveness_at(const Competitor& comp, double level, const Neighbours& nb, bool interactions, Rng& rng) {
  const double u = canonical(rng);
  double r = level;
  if (interactions && nb.behind != kNone && nb.behind_gap <= comp.theta_behind && u < comp.spur_prob)
    r *= comp.spur_boost;
  return std::max(r, kMinMultiplier);
}

StepResult step_at(const Competitor& comp, Eigen::Index c, const RaceState& state, const Neighbours& nb,
                   bool interactions, double resp, double pref, Rng& rng) {
  const double u = canonical(rng);
  const double raw = comp.step.draw(rng);
  StepResult out;
  out.step = std::max(resp * pref, kMinMultiplier) * raw;
  if (interactions && nb.ahead != kNone && !state.finished(nb.ahead) && nb.ahead_gap <= comp.theta_ahead &&
      u < comp.block_prob) {
    out.step = resp * std::min(state.last_steps(c), state.last_steps(nb.ahead));
    out.blocked = true;
    out.blocker = nb.ahead;
  }
  return out;
}

Neighbours neighbours_of(Eigen::Index c, const RaceState& state) {
  return neighbours(c, state.positions.data(), state.size());
}

void check_shape(const RaceState& state, std::span<const Competitor> field) {
  if (state.size() != static_cast<Eigen::Index>(field.size()) || state.schedules.size() != field.size())
    throw ConfigError("race state does not match the field");
}

// One synchronous tick. Steps land in `steps` (sized n); `rep` is filled when given.
void tick_impl(RaceState& state, const RaceConfig& cfg, std::span<const Competitor> field, RaceStreams& streams,
               const double* prefs, std::vector<double>& steps, TickReport* rep) {
  const auto n = state.size();
  const double* d = state.positions.data();
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (state.finish_time[ci]) {
      steps[ci] = 0.0;
      continue;
    }
    auto& rng = streams.per_competitor[ci];
    const Neighbours nb = cfg.interactions ? neighbours(c, d, n) : Neighbours{};
    const double level = state.schedules[ci].level_at(d[c] / cfg.track_length);
    const double r = responsiveness_at(field[ci], level, nb, cfg.interactions, rng);
    const StepResult sr = step_at(field[ci], c, state, nb, cfg.interactions, r, prefs[ci], rng);
    steps[ci] = sr.step;
    if (rep) {
      rep->resp[ci] = r;
      rep->steps[ci] = sr;
    }
  }

  const double t0 = state.t;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (state.finish_time[ci]) continue;
    const double s = steps[ci];
    const double d0 = state.positions(c);
    const double d1 = d0 + s;
    state.last_steps(c) = s;
    if (d1 >= cfg.track_length) {
      state.finish_time[ci] = t0 + cfg.tick * (cfg.track_length - d0) / s;
      state.positions(c) = cfg.track_length;
    } else {
      state.positions(c) = d1;
    }
  }
  state.t = t0 + cfg.tick;
  ++state.tick;
}

std::vector<double> preference_coeffs(const RaceConfig& cfg, std::span<const Competitor> field) {
  std::vector<double> p(field.size());
  for (std::size_t i = 0; i < field.size(); ++i)
    p[i] = preference_coeff(field[i], cfg.factors, cfg.preference_form, cfg.pref_k);
  return p;
}

} // namespace

double responsiveness(const Competitor& comp, Eigen::Index c, const RaceState& state, const RaceConfig& cfg,
                      Rng& rng) {
  const double level = state.schedules[static_cast<std::size_t>(c)].level_at(state.positions(c) / cfg.track_length);
  return responsiveness_at(comp, level, neighbours_of(c, state), cfg.interactions, rng);
}

StepResult step_size(const Competitor& comp, Eigen::Index c, const RaceState& state, const RaceConfig& cfg,
                     double resp, double pref, Rng& rng) {
  return step_at(comp, c, state, neighbours_of(c, state), cfg.interactions, resp, pref, rng);
}

RaceState start_race(const RaceConfig& cfg, std::span<const Competitor> field, RaceStreams& streams) {
  const auto n = static_cast<Eigen::Index>(field.size());
  if (streams.per_competitor.size() != field.size()) throw ConfigError("one RNG stream per competitor required");
  RaceState s;
  s.positions = cfg.start_positions.size() ? cfg.start_positions : Eigen::VectorXd::Zero(n);
  s.last_steps.resize(n);
  s.finish_time.assign(field.size(), std::nullopt);
  s.schedules.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    s.last_steps(static_cast<Eigen::Index>(i)) = field[i].step.mean();
    s.schedules.push_back(field[i].schedule.realize(streams.per_competitor[i]));
  }
  return s;
}

TickReport advance_tick(RaceState& state, const RaceConfig& cfg, std::span<const Competitor> field,
                        RaceStreams& streams) {
  if (state.over()) throw StateError("advance_tick called after the race is over");
  check_shape(state, field);
  TickReport rep;
  rep.steps.resize(field.size());
  rep.resp.assign(field.size(), 0.0);
  std::vector<double> steps(field.size());
  const auto prefs = preference_coeffs(cfg, field);
  tick_impl(state, cfg, field, streams, prefs.data(), steps, &rep);
  return rep;
}

std::vector<int> finish_order(const RaceState& state, std::span<const Competitor> field) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < state.finish_time.size(); ++i)
    if (state.finish_time[i]) idx.push_back(static_cast<int>(i));
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ta = *state.finish_time[static_cast<std::size_t>(a)];
    const double tb = *state.finish_time[static_cast<std::size_t>(b)];
    if (ta != tb) return ta < tb;
    return field[static_cast<std::size_t>(a)].id < field[static_cast<std::size_t>(b)].id;
  });
  return idx;
}

std::vector<int> run_race_from(RaceState snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                               RaceStreams& streams) {
  if (snapshot.size() != static_cast<Eigen::Index>(field.size()) || snapshot.last_steps.size() != snapshot.size() ||
      snapshot.finish_time.size() != field.size() || snapshot.schedules.size() != field.size() ||
      streams.per_competitor.size() != field.size())
    throw ConfigError("snapshot is inconsistent with the race field");
  const auto prefs = preference_coeffs(cfg, field);
  std::vector<double> steps(field.size());
  while (!snapshot.over()) {
    tick_impl(snapshot, cfg, field, streams, prefs.data(), steps, nullptr);
    if (snapshot.tick > kMaxRaceTicks) throw ConfigError("race did not terminate");
  }
  return finish_order(snapshot, field);
}

TrajectoryRecorder::TrajectoryRecorder(const RaceConfig& cfg, std::span<const Competitor> field,
                                       std::uint64_t seed) {
  base_.race_id = cfg.race_id;
  base_.track_length = cfg.track_length;
  base_.tick = cfg.tick;
  base_.seed = seed;
  for (const auto& c : field) base_.names.push_back(c.name);
}

void TrajectoryRecorder::record(const RaceState& s) {
  times_.push_back(s.t);
  rows_.push_back(s.positions);
}

RaceRecord TrajectoryRecorder::finish(const RaceState& final_state, std::span<const Competitor> field) const {
  RaceRecord r = base_;
  const auto rows = static_cast<Eigen::Index>(rows_.size());
  const auto cols = static_cast<Eigen::Index>(base_.names.size());
  r.times = Eigen::Map<const Eigen::VectorXd>(times_.data(), rows);
  r.positions.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) r.positions.row(i) = rows_[static_cast<std::size_t>(i)].transpose();
  r.finish_order = finish_order(final_state, field);
  r.finish_times.assign(field.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < field.size(); ++i)
    if (final_state.finish_time[i]) r.finish_times[i] = *final_state.finish_time[i];
  return r;
}

RaceRecord run_race(const RaceConfig& cfg, std::span<const Competitor> field, std::uint64_t seed) {
  cfg.validate(field);
  auto streams = RaceStreams::derive(seed, cfg.race_id, field);
  RaceState s = start_race(cfg, field, streams);
  TrajectoryRecorder rec(cfg, field, seed);
  rec.record(s);
  const auto prefs = preference_coeffs(cfg, field);
  std::vector<double> steps(field.size());
  while (!s.over()) {
    tick_impl(s, cfg, field, streams, prefs.data(), steps, nullptr);
    rec.record(s);
    if (s.tick > kMaxRaceTicks) throw ConfigError("race did not terminate");
  }
  return rec.finish(s, field);
}

} // namespace bbe
