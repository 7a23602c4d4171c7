#pragma once
#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbe/common.hpp"
#include "bbe/rng.hpp"

namespace bbe {

/// Lower clamp applied to the combined step multiplier and to responsiveness.
inline constexpr double kMinMultiplier = 0.01;

enum class StepKind { Uniform, LogNormal };

/// Per-tick step generator. Uniform(a=lo, b=hi) or LogNormal(a=mu, b=sigma) of distance per tick.
struct StepDistribution {
  StepKind kind{StepKind::Uniform};
  double a{10.0};
  double b{20.0};

  static StepDistribution uniform(double lo, double hi) { return {StepKind::Uniform, lo, hi}; }
  static StepDistribution lognormal(double mu, double sigma) { return {StepKind::LogNormal, mu, sigma}; }

  double mean() const;
  double draw(Rng& rng) const;
  void validate() const;
};

/// One responsiveness phase: `level` applies while race fraction < `end_frac`.
struct Phase {
  double end_frac{1.0};
  double level{1.0};
};

/// Piecewise-constant responsiveness over the fraction of track covered.
/// The final phase always ends at 1.0; interior boundaries lie strictly inside (0,1).
struct PhaseSchedule {
  std::vector<Phase> phases{{1.0, 1.0}};
  double boundary_sd{0.0};
  double level_sd{0.0};

  double level_at(double race_frac) const;

  /// Per-run realization: boundaries and levels jittered by truncated Gaussians (+-3 sd).
  PhaseSchedule realize(Rng& rng) const;

  void validate() const;
};

struct Competitor {
  int id{0};
  std::string name;
  StepDistribution step;
  Eigen::VectorXd preference;
  PhaseSchedule schedule;
  double theta_ahead{5.0};   // blocking distance to the competitor in front
  double theta_behind{5.0};  // spurring distance to the competitor behind
  double spur_boost{1.15};
  double block_prob{1.0};
  double spur_prob{0.5};

  void validate(Eigen::Index n_factors) const;
};

/// Competitor with randomized schedule: 2..4 interior phase boundaries, levels U(0.7, 1.0).
Competitor random_competitor(int id, std::string name, const StepDistribution& step, Eigen::Index n_factors,
                             Rng& rng, double boundary_sd = 0.02, double level_sd = 0.02);

enum class PreferenceForm { Normalized, Legacy };

struct BettingClose {
  /// 0 = betting closes when the last competitor finishes; n > 0 = when the n-th finishes.
  int nth_finisher{0};
};

struct RaceConfig {
  std::string race_id{"race"};
  double track_length{2000.0};
  Eigen::VectorXd factors;
  Eigen::VectorXd start_positions;  // empty = all zero
  double tick{1.0};
  BettingClose betting_close;
  bool interactions{true};
  PreferenceForm preference_form{PreferenceForm::Normalized};
  double pref_k{1.0};

  void validate(std::span<const Competitor> field) const;
};

using Field = std::vector<Competitor>;

struct RaceState {
  double t{0.0};
  std::int64_t tick{0};
  Eigen::VectorXd positions;
  Eigen::VectorXd last_steps;
  std::vector<std::optional<double>> finish_time;
  std::vector<PhaseSchedule> schedules;  // realized for this run

  Eigen::Index size() const { return positions.size(); }
  int finished_count() const;
  bool over() const { return finished_count() == static_cast<int>(positions.size()); }
  bool finished(Eigen::Index c) const { return finish_time[static_cast<std::size_t>(c)].has_value(); }
};

/// One independent RNG stream per competitor.
struct RaceStreams {
  std::vector<Rng> per_competitor;

  static RaceStreams derive(std::uint64_t seed, std::string_view race_id, std::span<const Competitor> field);
};

struct Neighbour {
  Eigen::Index index{0};
  double gap{0.0};
};

/// Nearest competitor strictly in front of `c` (finished or not); absent when c leads.
std::optional<Neighbour> nearest_ahead(Eigen::Index c, const Eigen::Ref<const Eigen::VectorXd>& d);
/// Nearest competitor strictly behind `c`; absent when c is last.
std::optional<Neighbour> nearest_behind(Eigen::Index c, const Eigen::Ref<const Eigen::VectorXd>& d);

double preference_coeff(const Competitor& comp, const Eigen::Ref<const Eigen::VectorXd>& factors,
                        PreferenceForm form = PreferenceForm::Normalized, double k = 1.0);

/// Responsiveness of competitor `c`: realized phase level at its race fraction, multiplied by the spur
/// boost with probability spur_prob when a pursuer is within theta_behind. Always consumes one draw.
double responsiveness(const Competitor& comp, Eigen::Index c, const RaceState& state, const RaceConfig& cfg,
                      Rng& rng);

struct StepResult {
  double step{0.0};
  bool blocked{false};
  std::optional<Eigen::Index> blocker;
};

/// Step for competitor `c` given its responsiveness and preference coefficient. Consumes a blocking
/// draw and a step draw on every call, whether or not they are used.
StepResult step_size(const Competitor& comp, Eigen::Index c, const RaceState& state, const RaceConfig& cfg,
                     double resp, double pref, Rng& rng);

/// Initial state: start positions, default last steps (step means) and per-run realized schedules.
RaceState start_race(const RaceConfig& cfg, std::span<const Competitor> field, RaceStreams& streams);

struct TickReport {
  std::vector<StepResult> steps;  // per competitor; zero step for already-finished ones
  std::vector<double> resp;
};

/// Synchronous update: all steps are computed from start-of-tick positions, then applied.
/// Competitors crossing the line get a linearly interpolated finish time and freeze at the line.
TickReport advance_tick(RaceState& state, const RaceConfig& cfg, std::span<const Competitor> field,
                        RaceStreams& streams);

/// Indices sorted by finish time, ties to lower competitor id. Unfinished competitors are omitted.
std::vector<int> finish_order(const RaceState& state, std::span<const Competitor> field);

struct RaceRecord {
  std::string race_id;
  std::vector<std::string> names;
  double track_length{0.0};
  double tick{1.0};
  std::uint64_t seed{0};
  Eigen::VectorXd times;       // one per recorded tick (row)
  Eigen::MatrixXd positions;   // rows = ticks, cols = competitors
  std::vector<int> finish_order;
  std::vector<double> finish_times;  // per competitor
};

/// Runs to completion from `snapshot`, returning the finish order.
std::vector<int> run_race_from(RaceState snapshot, const RaceConfig& cfg, std::span<const Competitor> field,
                               RaceStreams& streams);

/// Full race with per-competitor streams derived from (seed, race id, competitor id).
RaceRecord run_race(const RaceConfig& cfg, std::span<const Competitor> field, std::uint64_t seed);

/// Growing per-tick trajectory, finalized into a RaceRecord.
class TrajectoryRecorder {
public:
  TrajectoryRecorder(const RaceConfig& cfg, std::span<const Competitor> field, std::uint64_t seed);
  void record(const RaceState& s);
  const std::vector<Eigen::VectorXd>& history() const { return rows_; }
  RaceRecord finish(const RaceState& final_state, std::span<const Competitor> field) const;

private:
  RaceRecord base_;
  std::vector<double> times_;
  std::vector<Eigen::VectorXd> rows_;
};

/// Ticks after which a non-terminating race is treated as a configuration error.
inline constexpr std::int64_t kMaxRaceTicks = 10'000'000;

} // namespace bbe
