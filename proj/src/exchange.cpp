#include "bbe/exchange.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace bbe {

std::string_view to_string(Side s) { return s == Side::Back ? "back" : "lay"; }

std::string_view to_string(MarketPhase p) {
  switch (p) {
    case MarketPhase::PreRace: return "pre_race";
    case MarketPhase::InPlay: return "in_play";
    case MarketPhase::Closed: return "closed";
  }
  return "?";
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::MarketClosed: return "market_closed";
    case RejectReason::UnknownCompetitor: return "unknown_competitor";
    case RejectReason::UnknownBettor: return "unknown_bettor";
    case RejectReason::BadStake: return "bad_stake";
    case RejectReason::OffLadder: return "off_ladder";
    case RejectReason::InsufficientFunds: return "insufficient_funds";
  }
  return "?";
}

std::string_view to_string(CancelReason r) {
  switch (r) {
    case CancelReason::Requested: return "requested";
    case CancelReason::InPlay: return "in_play";
    case CancelReason::Expired: return "expired";
  }
  return "?";
}

Money lay_liability_ceil(Money stake, OddsTick odds) {
  const Money num = stake * (odds.centi() - 100);
  return (num + 99) / 100;
}

Money lay_liability_floor(Money stake, OddsTick odds) { return stake * (odds.centi() - 100) / 100; }

namespace {
constexpr int side_ix(Side s) { return s == Side::Back ? 0 : 1; }
} // namespace

Exchange::Exchange(int n_competitors, std::vector<Account> accounts, ExchangeConfig cfg)
    : n_(n_competitors), cfg_(cfg), accounts_(std::move(accounts)) {
  if (n_ < 1) throw ConfigError("market needs at least one competitor");
  for (std::size_t i = 0; i < accounts_.size(); ++i) {
    if (accounts_[i].bettor != static_cast<BettorId>(i)) throw ConfigError("account ids must be 0..B-1 in order");
    if (accounts_[i].balance < 0 || accounts_[i].escrow != 0)
      throw ConfigError("accounts must start with balance >= 0 and no escrow");
  }
  books_.resize(static_cast<std::size_t>(n_));
  for (auto& b : books_) {
    for (int s = 0; s < 2; ++s) {
      b.queues[s].resize(kLadderSize);
      b.agg[s].assign(kLadderSize, 0);
    }
  }
  last_traded_.assign(static_cast<std::size_t>(n_), std::nullopt);
  by_bettor_.resize(accounts_.size());
}

const Account& Exchange::account(BettorId b) const { return accounts_.at(static_cast<std::size_t>(b)); }

const Order& Exchange::order(OrderId id) const {
  if (id < 1 || id > static_cast<OrderId>(orders_.size())) throw std::out_of_range("unknown order id");
  return orders_[static_cast<std::size_t>(id - 1)];
}

Order& Exchange::order_mut(OrderId id) { return const_cast<Order&>(order(id)); }

Money Exchange::cell(int competitor, Side side, OddsTick t) const {
  return books_.at(static_cast<std::size_t>(competitor)).agg[side_ix(side)][static_cast<std::size_t>(t.index)];
}

const std::vector<OrderId>& Exchange::queue(int competitor, Side side, OddsTick t) const {
  return books_.at(static_cast<std::size_t>(competitor)).queues[side_ix(side)][static_cast<std::size_t>(t.index)];
}

Touch Exchange::touch(int competitor) const {
  const auto& b = books_.at(static_cast<std::size_t>(competitor));
  Touch out;
  for (int i = 0; i < kLadderSize; ++i) {
    if (b.agg[0][static_cast<std::size_t>(i)] > 0) {
      out.best_back = OddsTick{i};
      break;
    }
  }
  for (int i = kLadderSize - 1; i >= 0; --i) {
    if (b.agg[1][static_cast<std::size_t>(i)] > 0) {
      out.best_lay = OddsTick{i};
      break;
    }
  }
  return out;
}

std::optional<OddsTick> Exchange::last_traded(int competitor) const {
  return last_traded_.at(static_cast<std::size_t>(competitor));
}

std::vector<OrderId> Exchange::open_orders(BettorId b) const {
  std::vector<OrderId> out;
  for (OrderId id : by_bettor_.at(static_cast<std::size_t>(b)))
    if (order(id).live()) out.push_back(id);
  return out;
}

Money Exchange::total_money() const {
  Money total = pot_;
  for (const auto& a : accounts_) total += a.balance + a.escrow;
  return total;
}

Money Exchange::hold_for(const Order& o) const {
  return o.side == Side::Back ? o.unmatched : lay_liability_ceil(o.unmatched, o.odds);
}

void Exchange::rehold(Order& o) {
  const Money want = hold_for(o);
  auto& acct = accounts_[static_cast<std::size_t>(o.bettor)];
  acct.escrow += want - o.held;
  acct.balance -= want - o.held;
  o.held = want;
}

Money Exchange::recompute_escrow(BettorId b) const {
  Money total = 0;
  for (OrderId id : by_bettor_.at(static_cast<std::size_t>(b))) total += hold_for(order(id));
  if (!settled_) {
    for (const auto& m : matched_) {
      if (m.backer == b) total += m.stake;
      if (m.layer == b) total += m.liability();
    }
  }
  return total;
}

std::size_t Exchange::append(EventKind kind) {
  JournalEntry e;
  e.seq = next_seq_++;
  e.time_ms = now_ms_;
  e.kind = kind;
  journal_.push_back(std::move(e));
  return journal_.size() - 1;
}

CellChange Exchange::cell_change(const Order& o) const {
  return CellChange{o.competitor, o.side, o.odds, cell(o.competitor, o.side, o.odds)};
}

void Exchange::remove_from_queue(const Order& o) {
  auto& book = books_[static_cast<std::size_t>(o.competitor)];
  auto& q = book.queues[side_ix(o.side)][static_cast<std::size_t>(o.odds.index)];
  q.erase(std::find(q.begin(), q.end(), o.id));
}

void Exchange::execute(Order& incoming, Order& resting, Money amount, std::vector<MatchedBet>& out) {
  auto& book = books_[static_cast<std::size_t>(resting.competitor)];
  book.agg[side_ix(resting.side)][static_cast<std::size_t>(resting.odds.index)] -= amount;

  incoming.unmatched -= amount;
  resting.unmatched -= amount;
  rehold(incoming);
  rehold(resting);

  MatchedBet m;
  const Order& back = incoming.side == Side::Back ? incoming : resting;
  const Order& lay = incoming.side == Side::Back ? resting : incoming;
  m.back_order = back.id;
  m.lay_order = lay.id;
  m.backer = back.bettor;
  m.layer = lay.bettor;
  m.competitor = resting.competitor;
  m.odds = resting.odds;
  m.stake = amount;
  m.match_ms = now_ms_;

  auto& backer = accounts_[static_cast<std::size_t>(m.backer)];
  auto& layer = accounts_[static_cast<std::size_t>(m.layer)];
  backer.balance -= m.stake;
  backer.escrow += m.stake;
  layer.balance -= m.liability();
  layer.escrow += m.liability();

  for (Order* o : {&incoming, &resting})
    o->status = o->unmatched == 0 ? OrderStatus::Filled : OrderStatus::PartFilled;

  last_traded_[static_cast<std::size_t>(m.competitor)] = m.odds;
  matched_.push_back(m);
  out.push_back(m);

  const std::size_t ix = append(EventKind::Match);
  journal_[ix].match = m;
  journal_[ix].order_id = resting.id;
  journal_[ix].cells.push_back(cell_change(resting));
}

SubmissionReport Exchange::submit_order(const OrderRequest& req) {
  SubmissionReport rep;
  const std::size_t entry = append(EventKind::Submit);
  journal_[entry].request = req;

  auto reject = [&](RejectReason why) {
    rep.reason = why;
    journal_[entry].reject = why;
    return rep;
  };
  if (phase_ == MarketPhase::Closed) return reject(RejectReason::MarketClosed);
  if (req.competitor < 0 || req.competitor >= n_) return reject(RejectReason::UnknownCompetitor);
  if (req.bettor < 0 || req.bettor >= static_cast<BettorId>(accounts_.size())) return reject(RejectReason::UnknownBettor);
  if (req.stake <= 0) return reject(RejectReason::BadStake);
  if (req.odds.index < 0 || req.odds.index >= kLadderSize) return reject(RejectReason::OffLadder);
  const Money need = req.side == Side::Back ? req.stake : lay_liability_ceil(req.stake, req.odds);
  if (accounts_[static_cast<std::size_t>(req.bettor)].balance < need) return reject(RejectReason::InsufficientFunds);

  Order o;
  o.id = static_cast<OrderId>(orders_.size()) + 1;
  o.bettor = req.bettor;
  o.competitor = req.competitor;
  o.side = req.side;
  o.odds = req.odds;
  o.stake = req.stake;
  o.arrival_seq = journal_[entry].seq;
  o.arrival_ms = now_ms_;
  o.unmatched = req.stake;
  orders_.push_back(o);
  by_bettor_[static_cast<std::size_t>(o.bettor)].push_back(o.id);
  rehold(orders_.back());

  rep.accepted = true;
  rep.order_id = o.id;
  journal_[entry].order_id = o.id;

  auto& book = books_[static_cast<std::size_t>(req.competitor)];
  const Side opp = req.side == Side::Back ? Side::Lay : Side::Back;
  auto& opp_q = book.queues[side_ix(opp)];

  // Price order over the opposite side, best first. Back consumes lays at odds >= X (highest first);
  // lay consumes backs at odds <= Y (lowest first). Strict mode only visits the order's own tick.
  std::vector<int> ticks;
  if (cfg_.mode == MatchingMode::Strict) {
    ticks.push_back(req.odds.index);
  } else if (req.side == Side::Back) {
    for (int t = kLadderSize - 1; t >= req.odds.index; --t) ticks.push_back(t);
  } else {
    for (int t = 0; t <= req.odds.index; ++t) ticks.push_back(t);
  }

  for (int t : ticks) {
    auto& q = opp_q[static_cast<std::size_t>(t)];
    while (!q.empty() && orders_[static_cast<std::size_t>(o.id - 1)].unmatched > 0) {
      Order& incoming = orders_[static_cast<std::size_t>(o.id - 1)];
      Order& resting = orders_[static_cast<std::size_t>(q.front() - 1)];
      const Money amount = std::min(incoming.unmatched, resting.unmatched);
      execute(incoming, resting, amount, rep.matches);
      if (resting.unmatched == 0) q.erase(q.begin());
    }
    if (orders_[static_cast<std::size_t>(o.id - 1)].unmatched == 0) break;
  }

  Order& placed = orders_[static_cast<std::size_t>(o.id - 1)];
  rep.resting_unmatched = placed.unmatched;
  if (placed.unmatched > 0) {
    book.queues[side_ix(placed.side)][static_cast<std::size_t>(placed.odds.index)].push_back(placed.id);
    book.agg[side_ix(placed.side)][static_cast<std::size_t>(placed.odds.index)] += placed.unmatched;
    journal_[entry].cells.push_back(cell_change(placed));
  }
  return rep;
}

Money Exchange::cancel_remainder(Order& o, CancelReason why, OrderStatus status) {
  if (!o.live()) return 0;
  const Money amount = o.unmatched;
  remove_from_queue(o);
  books_[static_cast<std::size_t>(o.competitor)].agg[side_ix(o.side)][static_cast<std::size_t>(o.odds.index)] -= amount;
  o.cancelled += amount;
  o.unmatched = 0;
  o.status = status;
  rehold(o);

  const std::size_t ix = append(EventKind::Cancel);
  journal_[ix].order_id = o.id;
  journal_[ix].amount = amount;
  journal_[ix].cancel_reason = why;
  journal_[ix].cells.push_back(cell_change(o));
  return amount;
}

CancelReport Exchange::cancel_order(OrderId id) {
  Order& o = order_mut(id);
  CancelReport rep{id, 0};
  if (o.live()) {
    rep.cancelled = cancel_remainder(o, CancelReason::Requested, OrderStatus::Cancelled);
  } else {
    const std::size_t ix = append(EventKind::Cancel);
    journal_[ix].order_id = id;
    journal_[ix].cancel_reason = CancelReason::Requested;
  }
  return rep;
}

int Exchange::cancel_all(CancelReason why, OrderStatus status, MarketPhase next) {
  int count = 0;
  for (auto& o : orders_) {
    if (o.live()) {
      cancel_remainder(o, why, status);
      ++count;
    }
  }
  phase_ = next;
  const std::size_t ix = append(EventKind::Phase);
  journal_[ix].phase = next;
  return count;
}

int Exchange::transition_in_play() {
  if (phase_ != MarketPhase::PreRace) throw StateError("transition_in_play requires the pre-race phase");
  return cancel_all(CancelReason::InPlay, OrderStatus::Cancelled, MarketPhase::InPlay);
}

int Exchange::close_market() {
  if (phase_ != MarketPhase::InPlay) throw StateError("close_market requires the in-play phase");
  return cancel_all(CancelReason::Expired, OrderStatus::Expired, MarketPhase::Closed);
}

SettlementReport Exchange::settle(int winner, double commission_rate) {
  if (phase_ != MarketPhase::Closed) throw StateError("settle requires a closed market");
  if (settled_) throw StateError("market already settled");
  if (winner < 0 || winner >= n_) throw std::invalid_argument("winner is not in the field");
  if (!(commission_rate >= 0.0 && commission_rate <= 1.0))
    throw std::invalid_argument("commission rate must lie in [0,1]");
  const std::int64_t bps = std::llround(commission_rate * 10000.0);

  std::map<BettorId, Money> gross;
  for (const auto& m : matched_) {
    auto& backer = accounts_[static_cast<std::size_t>(m.backer)];
    auto& layer = accounts_[static_cast<std::size_t>(m.layer)];
    const Money liab = m.liability();
    backer.escrow -= m.stake;
    layer.escrow -= liab;
    if (m.competitor == winner) {
      backer.balance += m.stake + liab;
      gross[m.backer] += liab;
      gross[m.layer] -= liab;
    } else {
      layer.balance += liab + m.stake;
      gross[m.layer] += m.stake;
      gross[m.backer] -= m.stake;
    }
  }

  SettlementReport rep;
  rep.winner = winner;
  for (const auto& [b, g] : gross) {
    BettorSettlement s{b, g, 0};
    if (g > 0) {
      s.commission = (g * bps + 5000) / 10000;
      accounts_[static_cast<std::size_t>(b)].balance -= s.commission;
      pot_ += s.commission;
      rep.total_commission += s.commission;
    }
    rep.bettors.push_back(s);
  }
  settled_ = true;

  const std::size_t ix = append(EventKind::Settle);
  journal_[ix].winner = winner;
  journal_[ix].commission_bps = bps;
  return rep;
}

// ---------------------------------------------------------------------------
// Views

std::optional<double> favourite_odds(const Touch& t) {
  if (t.best_back && t.best_lay) return 0.5 * (t.best_back->value() + t.best_lay->value());
  if (t.best_back) return t.best_back->value();
  if (t.best_lay) return t.best_lay->value();
  return std::nullopt;
}

std::vector<GridRow> grid_view(const Exchange& ex, int depth) {
  if (depth < 1) throw std::invalid_argument("grid depth must be >= 1");
  std::vector<GridRow> rows;
  for (int c = 0; c < ex.competitors(); ++c) {
    GridRow row;
    row.competitor = c;
    for (int i = 0; i < kLadderSize && static_cast<int>(row.back.size()) < depth; ++i) {
      const Money m = ex.cell(c, Side::Back, OddsTick{i});
      if (m > 0) row.back.emplace_back(OddsTick{i}, m);
    }
    for (int i = kLadderSize - 1; i >= 0 && static_cast<int>(row.lay.size()) < depth; --i) {
      const Money m = ex.cell(c, Side::Lay, OddsTick{i});
      if (m > 0) row.lay.emplace_back(OddsTick{i}, m);
    }
    row.favourite_odds = favourite_odds(ex.touch(c));
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.favourite_odds.has_value() != b.favourite_odds.has_value()) return a.favourite_odds.has_value();
    if (a.favourite_odds && *a.favourite_odds != *b.favourite_odds) return *a.favourite_odds < *b.favourite_odds;
    return a.competitor < b.competitor;
  });
  return rows;
}

std::vector<LadderCell> ladder_view(const Exchange& ex, int competitor) {
  if (competitor < 0 || competitor >= ex.competitors()) throw std::out_of_range("unknown competitor");
  std::vector<LadderCell> out;
  for (int i = 0; i < kLadderSize; ++i) {
    const OddsTick t{i};
    const Money b = ex.cell(competitor, Side::Back, t);
    const Money l = ex.cell(competitor, Side::Lay, t);
    if (b > 0 || l > 0) out.push_back({t, b, l});
  }
  return out;
}

Exchange replay_journal(const std::vector<JournalEntry>& journal, int n_competitors,
                        std::vector<Account> initial_accounts, ExchangeConfig cfg) {
  return replay_journal(journal, n_competitors, std::move(initial_accounts), cfg,
                        [](const Exchange&, const JournalEntry&) {});
}

} // namespace bbe
