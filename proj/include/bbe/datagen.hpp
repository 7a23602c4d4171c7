#pragma once
#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "bbe/exchange.hpp"
#include "bbe/orchestrator.hpp"
#include "bbe/race.hpp"

namespace bbe {

/// Integer cents as a fixed two-decimal currency string ("-12.05").
std::string format_cents(Money cents);

// Trajectories ---------------------------------------------------------------

/// `t,<name1>,...`, one row per recorded tick, distances with 3 decimals.
void write_trajectories(std::ostream& os, const RaceRecord& rec);

/// Parses a trajectory CSV back into names, times and positions (other fields left default).
RaceRecord read_trajectories(std::istream& is);

// Rebased projection ---------------------------------------------------------

struct RebasedSeries {
  double intercept{0.0};
  double slope{0.0};
  Eigen::VectorXd times;
  Eigen::MatrixXd residuals;  // rows = ticks, cols = competitors

  /// Adds the fitted line back to the residuals.
  Eigen::MatrixXd restore() const;
};

/// One least-squares line d = a + b t pooled over every competitor's points, subtracted from each
/// series. Throws std::invalid_argument with fewer than two distinct times.
RebasedSeries rebase(const RaceRecord& rec);

void write_rebased(std::ostream& os, const RebasedSeries& s, std::span<const std::string> names);

// Market-change stream -------------------------------------------------------

struct StreamMeta {
  std::string market_id;
  std::vector<std::string> runner_names;
  std::int64_t epoch_ms{kDefaultEpochMs};
};

/// Newline-delimited JSON. Line one is a metadata message (pt = epoch, market definition); every
/// later line batches the journal entries sharing one time_ms:
///   {"op":"mcm","pt":<ms>,"mc":[{"id":<market>,"rc":[{"id":c,"back":[[odds,cents],..],
///    "lay":[[odds,cents],..],"trd":[[odds,cents],..]}],"marketDefinition":{..}}]}
/// back/lay entries carry the new aggregate unmatched stake of the cell (0 = cell emptied); trd
/// entries the cumulative matched stake at that odds. Stakes are integer cents.
void write_market_stream(std::ostream& os, const std::vector<JournalEntry>& journal, const StreamMeta& meta);

/// Book rebuilt from a stream.
struct StreamBook {
  std::string market_id;
  std::vector<std::string> runner_names;
  std::map<std::tuple<int, Side, int>, Money> cells;  // (competitor, side, odds centi) -> stake; no zeros
  std::map<std::pair<int, int>, Money> traded;        // (competitor, odds centi) -> cumulative stake
  MarketPhase phase{MarketPhase::PreRace};
  std::optional<int> winner;
  std::int64_t last_pt{0};
  std::size_t messages{0};
};

/// Applies every message of a stream to an empty book. `on_message` sees the book after each
/// message. Throws std::runtime_error on malformed input or a decreasing pt.
StreamBook replay_market_stream(std::istream& is,
                                const std::function<void(const StreamBook&)>& on_message = {});

/// Exchange book in the StreamBook key space, for comparisons.
std::map<std::tuple<int, Side, int>, Money> book_cells(const Exchange& ex);

// Tabular series ---------------------------------------------------------------

/// Per market tick: t, phase, then for each runner back, back_size, lay, lay_size, ltp, traded.
void write_market_series(std::ostream& os, const SessionRecord& rec);

/// `t,<name1>,...` with win probabilities as percentages (2 decimals). With `bettor` set only
/// that bettor's samples are written; otherwise a leading `bettor` column is added.
void write_sentiment(std::ostream& os, std::span<const BeliefSample> samples, std::span<const std::string> names,
                     std::optional<BettorId> bettor = std::nullopt);

/// bettor,strategy,initial,balance,escrow,pnl (currency, 2 decimals).
void write_accounts(std::ostream& os, const SessionRecord& rec);

/// One JSON object per journal entry.
void write_journal(std::ostream& os, const std::vector<JournalEntry>& journal);

// Session bundle ---------------------------------------------------------------

enum class OutputFormat { Csv, Jsonl, All };

/// Writes the session's artifacts into `dir` (created if needed) and returns their paths.
/// csv: trajectories, rebased, market, sentiment, accounts; jsonl: stream, journal; both: summary.json.
std::vector<std::filesystem::path> write_session(const SessionRecord& rec, const std::filesystem::path& dir,
                                                 OutputFormat format);

} // namespace bbe
