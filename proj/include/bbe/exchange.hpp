#pragma once
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "bbe/common.hpp"
#include "bbe/ladder.hpp"

namespace bbe {

enum class Side : std::uint8_t { Back, Lay };
enum class OrderStatus : std::uint8_t { Open, PartFilled, Filled, Cancelled, Expired };
enum class MarketPhase : std::uint8_t { PreRace, InPlay, Closed };
enum class MatchingMode : std::uint8_t { Crossing, Strict };
enum class RejectReason : std::uint8_t {
  None,
  MarketClosed,
  UnknownCompetitor,
  UnknownBettor,
  BadStake,
  OffLadder,
  InsufficientFunds,
};
enum class CancelReason : std::uint8_t { Requested, InPlay, Expired };

std::string_view to_string(Side s);
std::string_view to_string(MarketPhase p);
std::string_view to_string(RejectReason r);
std::string_view to_string(CancelReason r);

/// Lay liability for `stake` at `odds`, rounded up to the cent (escrow for unmatched lays).
Money lay_liability_ceil(Money stake, OddsTick odds);
/// Lay liability rounded down to the cent (matched bets; equals the backer's winnings).
Money lay_liability_floor(Money stake, OddsTick odds);

struct OrderRequest {
  BettorId bettor{0};
  int competitor{0};
  Side side{Side::Back};
  OddsTick odds;
  Money stake{0};
};

struct Order {
  OrderId id{0};
  BettorId bettor{0};
  int competitor{0};
  Side side{Side::Back};
  OddsTick odds;
  Money stake{0};
  std::int64_t arrival_seq{0};
  std::int64_t arrival_ms{0};
  Money unmatched{0};
  Money cancelled{0};
  OrderStatus status{OrderStatus::Open};
  Money held{0};  // escrow currently held for the unmatched remainder

  Money matched() const { return stake - unmatched - cancelled; }
  bool live() const { return unmatched > 0; }
};

struct MatchedBet {
  OrderId back_order{0};
  OrderId lay_order{0};
  BettorId backer{0};
  BettorId layer{0};
  int competitor{0};
  OddsTick odds;  // the resting order's odds
  Money stake{0};
  std::int64_t match_ms{0};

  Money liability() const { return lay_liability_floor(stake, odds); }
  auto operator<=>(const MatchedBet&) const = default;
};

struct Account {
  BettorId bettor{0};
  Money balance{0};
  Money escrow{0};
};

struct SubmissionReport {
  bool accepted{false};
  RejectReason reason{RejectReason::None};
  OrderId order_id{0};
  std::vector<MatchedBet> matches;
  Money resting_unmatched{0};
};

struct CancelReport {
  OrderId order_id{0};
  Money cancelled{0};  // zero for a no-op (already filled or cancelled)
};

struct BettorSettlement {
  BettorId bettor{0};
  Money gross{0};       // net market winnings before commission
  Money commission{0};
};

struct SettlementReport {
  int winner{0};
  std::vector<BettorSettlement> bettors;  // every bettor with a matched position, ascending id
  Money total_commission{0};
};

/// Aggregate unmatched stake on one (competitor, side, tick) cell.
struct CellChange {
  int competitor{0};
  Side side{Side::Back};
  OddsTick odds;
  Money size{0};
  bool operator==(const CellChange&) const = default;
};

enum class EventKind : std::uint8_t { Submit, Match, Cancel, Phase, Settle };

/// One exchange event. Submit/Cancel(Requested)/Phase/Settle are inputs and are replayable;
/// Match and automatic cancels are their consequences.
struct JournalEntry {
  std::int64_t seq{0};
  std::int64_t time_ms{0};
  EventKind kind{EventKind::Submit};
  OrderRequest request;                  // Submit
  OrderId order_id{0};                   // Submit (0 if rejected) / Cancel
  RejectReason reject{RejectReason::None};
  MatchedBet match;                      // Match
  Money amount{0};                       // Cancel: stake released
  CancelReason cancel_reason{CancelReason::Requested};
  MarketPhase phase{MarketPhase::PreRace};  // Phase: new phase
  int winner{-1};                        // Settle
  std::int64_t commission_bps{0};        // Settle
  std::vector<CellChange> cells;         // ladder cells whose aggregate changed
};

struct ExchangeConfig {
  MatchingMode mode{MatchingMode::Crossing};
};

struct LadderCell {
  OddsTick odds;
  Money back{0};
  Money lay{0};
};

struct Touch {
  std::optional<OddsTick> best_back;  // lowest unmatched back odds
  std::optional<OddsTick> best_lay;   // highest unmatched lay odds
};

/// Win market for one race: per-competitor two-sided ladders of FIFO queues, accounts with escrow,
/// commission pot and an append-only journal. Single writer.
class Exchange {
public:
  Exchange(int n_competitors, std::vector<Account> accounts, ExchangeConfig cfg = {});

  void set_time_ms(std::int64_t ms) { now_ms_ = ms; }
  std::int64_t time_ms() const { return now_ms_; }

  SubmissionReport submit_order(const OrderRequest& req);
  /// Throws std::out_of_range for an unknown id.
  CancelReport cancel_order(OrderId id);
  int transition_in_play();
  int close_market();
  SettlementReport settle(int winner, double commission_rate);

  MarketPhase phase() const { return phase_; }
  bool settled() const { return settled_; }
  int competitors() const { return n_; }
  MatchingMode mode() const { return cfg_.mode; }

  const std::vector<Account>& accounts() const { return accounts_; }
  const Account& account(BettorId b) const;
  const Order& order(OrderId id) const;
  const std::vector<Order>& orders() const { return orders_; }
  const std::vector<MatchedBet>& matched() const { return matched_; }
  const std::vector<JournalEntry>& journal() const { return journal_; }
  Money commission_pot() const { return pot_; }

  /// Σ balance + Σ escrow + commission pot.
  Money total_money() const;
  /// Escrow recomputed from live orders and matched bets (settlement-aware).
  Money recompute_escrow(BettorId b) const;

  Money cell(int competitor, Side side, OddsTick t) const;
  const std::vector<OrderId>& queue(int competitor, Side side, OddsTick t) const;
  Touch touch(int competitor) const;
  std::optional<OddsTick> last_traded(int competitor) const;
  /// Live order ids for a bettor in arrival order.
  std::vector<OrderId> open_orders(BettorId b) const;

private:
  struct Book {
    std::vector<std::vector<OrderId>> queues[2];
    std::vector<Money> agg[2];
  };

  Order& order_mut(OrderId id);
  Money hold_for(const Order& o) const;
  void rehold(Order& o);
  void execute(Order& incoming, Order& resting, Money amount, std::vector<MatchedBet>& out);
  Money cancel_remainder(Order& o, CancelReason why, OrderStatus status);
  void remove_from_queue(const Order& o);
  CellChange cell_change(const Order& o) const;
  std::size_t append(EventKind kind);
  int cancel_all(CancelReason why, OrderStatus status, MarketPhase next);

  int n_;
  ExchangeConfig cfg_;
  std::vector<Account> accounts_;
  std::vector<Book> books_;
  std::vector<Order> orders_;  // index = id - 1
  std::vector<std::vector<OrderId>> by_bettor_;
  std::vector<MatchedBet> matched_;
  std::vector<std::optional<OddsTick>> last_traded_;
  std::vector<JournalEntry> journal_;
  MarketPhase phase_{MarketPhase::PreRace};
  bool settled_{false};
  Money pot_{0};
  std::int64_t now_ms_{0};
  std::int64_t next_seq_{1};
};

/// Per-competitor rows of up to `depth` best cells each side, touch outward.
struct GridRow {
  int competitor{0};
  std::vector<std::pair<OddsTick, Money>> back;  // lowest odds first
  std::vector<std::pair<OddsTick, Money>> lay;   // highest odds first
  std::optional<double> favourite_odds;
};

/// Mid-touch odds; one-sided books use the available side.
std::optional<double> favourite_odds(const Touch& t);

/// Rows sorted by ascending favourite odds (empty books last, then by competitor).
std::vector<GridRow> grid_view(const Exchange& ex, int depth);

/// Sparse full-depth ladder for one competitor, ascending odds. Throws std::out_of_range for an
/// unknown competitor.
std::vector<LadderCell> ladder_view(const Exchange& ex, int competitor);

/// Re-executes the journal's input events against fresh accounts. `on_step` (optional) is called
/// after each input with the exchange state.
template <typename OnStep>
Exchange replay_journal(const std::vector<JournalEntry>& journal, int n_competitors,
                        std::vector<Account> initial_accounts, ExchangeConfig cfg, OnStep&& on_step);

Exchange replay_journal(const std::vector<JournalEntry>& journal, int n_competitors,
                        std::vector<Account> initial_accounts, ExchangeConfig cfg = {});

// ---------------------------------------------------------------------------

template <typename OnStep>
Exchange replay_journal(const std::vector<JournalEntry>& journal, int n_competitors,
                        std::vector<Account> initial_accounts, ExchangeConfig cfg, OnStep&& on_step) {
  Exchange ex(n_competitors, std::move(initial_accounts), cfg);
  for (const auto& e : journal) {
    bool input = true;
    ex.set_time_ms(e.time_ms);
    switch (e.kind) {
      case EventKind::Submit: ex.submit_order(e.request); break;
      case EventKind::Cancel:
        if (e.cancel_reason == CancelReason::Requested) ex.cancel_order(e.order_id);
        else input = false;
        break;
      case EventKind::Phase:
        if (e.phase == MarketPhase::InPlay) ex.transition_in_play();
        else if (e.phase == MarketPhase::Closed) ex.close_market();
        else input = false;
        break;
      case EventKind::Settle: ex.settle(e.winner, static_cast<double>(e.commission_bps) / 10000.0); break;
      case EventKind::Match: input = false; break;
    }
    if (input) on_step(ex, e);
  }
  return ex;
}

} // namespace bbe
