#pragma once
#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "bbe/exchange.hpp"
#include "bbe/prediction.hpp"
#include "bbe/race.hpp"
#include "bbe/rng.hpp"

namespace bbe {

// Strategies. Each produces a pick and a belief vector over the field.
struct ZeroIntelligence {};
struct LeaderWins {};
struct Underdog {
  double gap{10.0};  // switch to the leader once P2 trails by at least this distance
};
struct BackTheFavourite {};
struct Linex {
  double window{30.0};  // seconds of history used for the speed estimate
};
struct RationalPredictor {
  BeliefProfile profile;
};
struct Representative {
  double bias_strength{0.3};  // power distortion exponent is 1 - bias_strength
  std::vector<int> stake_multiples{2, 5, 10};  // currency units
  BeliefProfile profile;
};

using Strategy =
    std::variant<ZeroIntelligence, LeaderWins, Underdog, BackTheFavourite, Linex, RationalPredictor, Representative>;

std::string_view strategy_name(const Strategy& s);

struct QuoteParams {
  double shade{0.0};        // fraction of the aggression cap added on top of the fair tick
  int aggression_cap{10};   // ticks
  int improve_cap{5};       // max ticks a quote may sit behind the current touch
};

struct BettorSpec {
  BettorId id{0};
  Strategy strategy{ZeroIntelligence{}};
  Money initial_balance{100'000};
  double revise_interval{5.0};  // seconds between decisions
  double improve_after{10.0};   // seconds before a resting order is re-quoted
  int max_open_orders{2};
  QuoteParams quote;
  double confidence{0.6};  // belief mass on the pick for heuristic strategies
  double p_back{0.5};
  Money stake_min{200};
  Money stake_max{5'000};

  void validate(double race_tick) const;
};

struct OwnOrder {
  OrderId id{0};
  int competitor{0};
  Side side{Side::Back};
  OddsTick odds;
  Money unmatched{0};
  double placed_at{0.0};  // session seconds
};

/// Read-only view handed to a bettor at decision time.
struct Observation {
  double t{0.0};  // session seconds
  MarketPhase phase{MarketPhase::PreRace};
  const RaceConfig* race{nullptr};
  std::span<const Competitor> field;
  const RaceState* state{nullptr};
  std::span<const Eigen::VectorXd> history;  // positions per race tick, back() == state->positions
  std::vector<Touch> touches;
  std::vector<std::optional<OddsTick>> last_traded;
  std::vector<OwnOrder> own_orders;
  Money balance{0};
  const ProbEstimate* shared_estimate{nullptr};  // set in shared-belief mode
};

struct Pick {
  int competitor{0};
  Eigen::VectorXd belief;
  bool fallback{false};  // BTF with no market information fell back to a random pick
};

/// Belief with `confidence` on `pick` and the remainder spread evenly over the others.
Eigen::VectorXd conviction_belief(Eigen::Index n, int pick, double confidence);

/// p^gamma / sum(p^gamma) with gamma = 1 - bias_strength.
Eigen::VectorXd longshot_distortion(const Eigen::Ref<const Eigen::VectorXd>& p, double bias_strength);

/// Finish time of each competitor if its current speed persists (finished competitors: actual time).
Eigen::VectorXd extrapolated_finish(const Eigen::Ref<const Eigen::VectorXd>& positions,
                                    const Eigen::Ref<const Eigen::VectorXd>& speeds, double track_length,
                                    double now, const RaceState* state = nullptr);

/// Per-competitor mean speed (distance / second) over the trailing window of `history`.
Eigen::VectorXd window_speeds(std::span<const Eigen::VectorXd> history, const RaceState& state, double tick,
                              double window);

/// Lowest index attaining the maximum / minimum.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);
int argmin(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Last model estimate and the race tick it was formed at. The race does not move before the off,
/// so a model bettor's belief is only re-estimated once the race tick changes.
struct ModelCache {
  std::int64_t race_tick{-1};
  Eigen::VectorXd probs;
};

Pick pick(const BettorSpec& spec, const Observation& obs, Rng& rng);
/// As above; RP and RB reuse `cache` when it was formed at the observed race tick.
Pick pick(const BettorSpec& spec, const Observation& obs, Rng& rng, ModelCache* cache);

/// Bettor quote: fair tick shaded away from the market by shade * aggression_cap ticks (backs up,
/// lays down), pulled to within improve_cap ticks of the touch, never on the wrong side of fair.
OddsTick quote_odds(double p, Side side, const Touch& touch, const QuoteParams& q);

/// Ladder tick nearest to the fair odds of p.
OddsTick fair_tick(double p);

/// Nearest multiple of `multiple` (half rounds up).
Money round_to_multiple(Money x, Money multiple);

/// Stake in cents; zero means no bet. `affordable` is the largest stake the account can escrow.
Money stake_size(const BettorSpec& spec, Money affordable, Rng& rng);

/// Largest stake whose escrow fits in `balance` at `odds` on `side`.
Money affordable_stake(Money balance, Side side, OddsTick odds);

struct SubmitAction {
  int competitor{0};
  Side side{Side::Back};
  OddsTick odds;
  Money stake{0};
};
struct CancelAction {
  OrderId id{0};
};
using BetAction = std::variant<SubmitAction, CancelAction>;

struct BettorState {
  Rng rng;
  Side direction{Side::Back};
  double next_due{0.0};
  ModelCache model_cache;
};

BettorState init_bettor(const BettorSpec& spec, std::uint64_t session_seed, double first_decision_at);

struct Decision {
  Pick pick;
  std::vector<BetAction> actions;
};

/// One decision: re-forms the belief, cancels orders the belief no longer supports, moves orders older
/// than improve_after one tick toward the opposite touch (cancel + resubmit, never past fair), and
/// places a new order when the target has none.
Decision step_bettor(const BettorSpec& spec, BettorState& state, const Observation& obs);

} // namespace bbe
