#pragma once
#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bbe/bettors.hpp"
#include "bbe/exchange.hpp"
#include "bbe/race.hpp"

namespace bbe {

enum class BeliefMode {
  PerBettor,  // every RP/RB bettor runs its own dry-runs
  Shared,     // one ensemble per tick, each bettor adds its own post-noise
};

inline constexpr std::int64_t kDefaultEpochMs = 1'609'459'200'000;  // 2021-01-01T00:00:00Z

struct SessionConfig {
  RaceConfig race;
  Field field;
  std::vector<BettorSpec> bettors;
  double pre_race_duration{60.0};
  double commission_rate{0.05};
  MatchingMode matching{MatchingMode::Crossing};
  std::uint64_t seed{1};
  BeliefMode belief_mode{BeliefMode::PerBettor};
  int shared_dryruns{200};
  std::int64_t epoch_ms{kDefaultEpochMs};

  void validate() const;
};

struct BeliefSample {
  BettorId bettor{0};
  double t{0.0};  // race seconds (negative before the off)
  int pick{0};
  Eigen::VectorXd probs;
};

struct CompetitorQuote {
  std::optional<OddsTick> best_back;
  Money back_size{0};
  std::optional<OddsTick> best_lay;
  Money lay_size{0};
  std::optional<OddsTick> last_traded;
  Money traded{0};  // cumulative matched stake
};

struct MarketTick {
  double t{0.0};  // race seconds
  MarketPhase phase{MarketPhase::PreRace};
  std::vector<CompetitorQuote> quotes;
};

struct SessionRecord {
  std::uint64_t seed{0};
  std::int64_t epoch_ms{kDefaultEpochMs};
  double pre_race_duration{0.0};
  MatchingMode matching{MatchingMode::Crossing};
  RaceRecord race;
  std::vector<std::string> bettor_strategies;
  std::vector<Account> initial_accounts;
  std::vector<Account> final_accounts;
  std::vector<Money> pnl;
  Money commission_pot{0};
  SettlementReport settlement;
  std::vector<JournalEntry> journal;
  std::vector<BeliefSample> beliefs;
  std::vector<MarketTick> market;
  int btf_fallbacks{0};
  double betting_closed_at{0.0};  // race seconds

  int winner() const { return race.finish_order.front(); }
  /// Session milliseconds -> published time.
  std::int64_t pt(std::int64_t session_ms) const { return epoch_ms + session_ms; }
};

/// Pre-race window, in-play loop (race tick, then due bettors in ascending id), close, settle.
SessionRecord run_session(const SessionConfig& cfg);

/// Bettor population template; expanded deterministically from a seed.
struct PopulationSpec {
  int count{200};
  // strategy weights (normalized internally)
  double zi{0.4}, lw{0.1}, ud{0.1}, btf{0.1}, linex{0.1}, rp{0.1}, rb{0.1};
  Money initial_balance{100'000};
  double revise_lo{3.0}, revise_hi{8.0};
  double model_revise_lo{10.0}, model_revise_hi{20.0};  // RP and RB decide less often
  double improve_lo{5.0}, improve_hi{20.0};
  double shade_lo{0.0}, shade_hi{0.6};
  int aggression_cap{10};
  int improve_cap{5};
  int max_open_orders{2};
  double confidence{0.6};
  double confidence_sd{0.05};
  double p_back{0.5};
  Money stake_min{200};
  Money stake_max{5'000};
  double ud_gap_lo{5.0}, ud_gap_hi{30.0};
  double linex_window_lo{5.0}, linex_window_hi{60.0};
  int dryruns_lo{5}, dryruns_hi{25};
  ParamNoise param_noise{0.02, 0.05, 0.02};
  double post_noise{0.02};
  double bias_lo{0.1}, bias_hi{0.5};

  void validate() const;
};

std::vector<BettorSpec> generate_population(const PopulationSpec& pop, std::uint64_t seed);

/// Six-runner field with randomized schedules (used by default configs and tests).
Field generate_field(int n, std::uint64_t seed, Eigen::Index n_factors = 2);

struct BatchFile {
  std::string path;  // relative to the batch output directory
  std::string sha256;
};

struct BatchEntry {
  int index{0};
  std::uint64_t seed{0};
  bool ok{false};
  std::string error;
  std::vector<BatchFile> files;
};

/// Writes one session's artifacts into `dir`, returning the written paths.
using SessionWriter = std::function<std::vector<std::filesystem::path>(const SessionRecord&, const std::filesystem::path&)>;

std::uint64_t session_seed(std::uint64_t master, int index);

/// M independent sessions, seeds derived from (master seed, index). Output per session goes to
/// out/session_<index>; the manifest (one JSON line per session, sorted by index) to out/manifest.jsonl.
/// Per-session failures are recorded without aborting the batch.
std::vector<BatchEntry> run_batch(const SessionConfig& tmpl, int m, int workers, const std::filesystem::path& out,
                                  const SessionWriter& writer);

// Liquidity arithmetic.

/// Lower bound on bettors for D distinct prices per side per competitor: 4 * D * n.
std::int64_t min_bettors(int n_runners, int depth);

/// n! / n^n, evaluated in log space.
double nonempty_market_prob(int n_runners);

enum class LiquidityModel {
  Paired,       // n initiators pick (competitor, direction) uniformly; each is met by one opposite-view counterparty
  Independent,  // all 2n bettors pick (competitor, direction) uniformly and independently
};

/// Fraction of trials in which every competitor ends with at least one matched bet, using the real
/// exchange at a single shared odds tick with 2n one-bet bettors.
double simulate_nonempty_frequency(int n_runners, int trials, std::uint64_t seed, LiquidityModel model);

} // namespace bbe
