#include <doctest.h>

#include <map>

#include "bbe/exchange.hpp"
#include "reference_matcher.hpp"

using namespace bbe;
using namespace bbe::testing;

namespace {

OddsTick tk(double odds) { return *tick_from_odds(odds); }

std::vector<Account> funded(int n, Money balance) {
  std::vector<Account> a;
  for (int i = 0; i < n; ++i) a.push_back(Account{i, balance, 0});
  return a;
}

OrderRequest req(BettorId b, int c, Side s, double odds, Money stake) { return OrderRequest{b, c, s, tk(odds), stake}; }

// Net change of each bettor's balance after one matched pair and settlement.
std::pair<Money, Money> settle_pair(Side first_side, double odds, Money stake, bool wins, double commission) {
  Exchange ex(2, funded(2, 1'000'000));
  const Side other = first_side == Side::Back ? Side::Lay : Side::Back;
  ex.submit_order(req(1, 0, other, odds, stake));
  ex.submit_order(req(0, 0, first_side, odds, stake));
  ex.transition_in_play();
  ex.close_market();
  ex.settle(wins ? 0 : 1, commission);
  return {ex.account(0).balance - 1'000'000, ex.account(1).balance - 1'000'000};
}

void check_book_invariants(const Exchange& ex) {
  for (int c = 0; c < ex.competitors(); ++c) {
    const Touch t = ex.touch(c);
    if (ex.mode() == MatchingMode::Crossing && t.best_back && t.best_lay) REQUIRE(*t.best_lay < *t.best_back);
    for (int i = 0; i < kLadderSize; ++i) {
      for (Side s : {Side::Back, Side::Lay}) {
        Money sum = 0;
        std::int64_t last_seq = -1;
        for (OrderId id : ex.queue(c, s, OddsTick{i})) {
          const Order& o = ex.order(id);
          REQUIRE(o.live());
          REQUIRE(o.arrival_seq > last_seq);
          last_seq = o.arrival_seq;
          sum += o.unmatched;
        }
        REQUIRE(sum == ex.cell(c, s, OddsTick{i}));
      }
    }
  }
  for (const auto& a : ex.accounts()) {
    REQUIRE(a.balance >= 0);
    REQUIRE(a.escrow >= 0);
    REQUIRE(a.escrow == ex.recompute_escrow(a.bettor));
  }
  for (const auto& o : ex.orders()) {
    REQUIRE(o.unmatched >= 0);
    REQUIRE(o.unmatched <= o.stake);
    REQUIRE((o.status == OrderStatus::Filled) == (o.unmatched == 0 && o.cancelled == 0));
  }
}

} // namespace

TEST_SUITE("exchange") {
  TEST_CASE("a back is filled by three lays in arrival order") {
    Exchange ex(1, funded(4, 1'000'000));
    ex.submit_order(req(1, 0, Side::Lay, 3.0, 3000));
    ex.submit_order(req(2, 0, Side::Lay, 3.0, 5000));
    ex.submit_order(req(3, 0, Side::Lay, 3.0, 2000));
    const auto rep = ex.submit_order(req(0, 0, Side::Back, 3.0, 10000));
    REQUIRE(rep.accepted);
    REQUIRE(rep.matches.size() == 3);
    CHECK(rep.matches[0].stake == 3000);
    CHECK(rep.matches[1].stake == 5000);
    CHECK(rep.matches[2].stake == 2000);
    CHECK(rep.matches[0].layer == 1);
    CHECK(rep.matches[2].layer == 3);
    CHECK(rep.resting_unmatched == 0);
    CHECK(ex.order(rep.order_id).status == OrderStatus::Filled);
  }

  TEST_CASE("the residual of a partly matched back rests on the book") {
    Exchange ex(1, funded(3, 1'000'000));
    ex.submit_order(req(1, 0, Side::Lay, 3.0, 3000));
    ex.submit_order(req(2, 0, Side::Lay, 3.0, 5000));
    const auto rep = ex.submit_order(req(0, 0, Side::Back, 3.0, 10000));
    CHECK(rep.matches.size() == 2);
    CHECK(rep.resting_unmatched == 2000);
    CHECK(ex.cell(0, Side::Back, tk(3.0)) == 2000);
    CHECK(ex.order(rep.order_id).status == OrderStatus::PartFilled);
  }

  TEST_CASE("a lay into an empty book rests") {
    Exchange ex(2, funded(1, 100'000));
    const auto rep = ex.submit_order(req(0, 1, Side::Lay, 3.0, 4000));
    CHECK(rep.accepted);
    CHECK(rep.matches.empty());
    CHECK(ex.cell(1, Side::Lay, tk(3.0)) == 4000);
    CHECK(ex.account(0).escrow == 8000);
  }

  TEST_CASE("crossing mode executes at the resting odds, best price first") {
    Exchange ex(1, funded(3, 1'000'000));
    ex.submit_order(req(1, 0, Side::Lay, 3.2, 1000));
    ex.submit_order(req(2, 0, Side::Lay, 3.5, 1000));
    const auto rep = ex.submit_order(req(0, 0, Side::Back, 3.0, 1500));
    REQUIRE(rep.matches.size() == 2);
    CHECK(rep.matches[0].odds == tk(3.5));
    CHECK(rep.matches[0].stake == 1000);
    CHECK(rep.matches[1].odds == tk(3.2));
    CHECK(rep.matches[1].stake == 500);

    const auto lay = ex.submit_order(req(1, 0, Side::Lay, 1.5, 100));
    CHECK(lay.matches.empty());
  }

  TEST_CASE("strict mode matches only at the same odds") {
    Exchange ex(1, funded(3, 1'000'000), ExchangeConfig{MatchingMode::Strict});
    ex.submit_order(req(1, 0, Side::Lay, 3.5, 1000));
    const auto a = ex.submit_order(req(0, 0, Side::Back, 3.0, 1000));
    CHECK(a.matches.empty());
    const auto b = ex.submit_order(req(2, 0, Side::Back, 3.5, 400));
    REQUIRE(b.matches.size() == 1);
    CHECK(b.matches[0].stake == 400);
  }

  TEST_CASE("rejections leave the market untouched") {
    Exchange ex(2, funded(2, 1000));
    const Money before = ex.total_money();
    CHECK(ex.submit_order(req(0, 0, Side::Back, 2.0, 1001)).reason == RejectReason::InsufficientFunds);
    // Lay liability 600 * 1.0 = 600 fits; 1001 * 1.0 does not.
    CHECK(ex.submit_order(req(1, 0, Side::Lay, 2.0, 1001)).reason == RejectReason::InsufficientFunds);
    CHECK(ex.submit_order(OrderRequest{0, 0, Side::Back, OddsTick{kLadderSize}, 10}).reason == RejectReason::OffLadder);
    CHECK(ex.submit_order(OrderRequest{0, 0, Side::Back, OddsTick{-1}, 10}).reason == RejectReason::OffLadder);
    CHECK(ex.submit_order(req(0, 5, Side::Back, 2.0, 10)).reason == RejectReason::UnknownCompetitor);
    CHECK(ex.submit_order(req(7, 0, Side::Back, 2.0, 10)).reason == RejectReason::UnknownBettor);
    CHECK(ex.submit_order(req(0, 0, Side::Back, 2.0, 0)).reason == RejectReason::BadStake);
    CHECK(ex.orders().empty());
    CHECK(ex.total_money() == before);
    CHECK(ex.account(0).escrow == 0);
    CHECK(ex.touch(0).best_back == std::nullopt);

    ex.transition_in_play();
    ex.close_market();
    CHECK(ex.submit_order(req(0, 0, Side::Back, 2.0, 10)).reason == RejectReason::MarketClosed);
  }

  TEST_CASE("lay escrow rounds up; matched liability rounds down") {
    CHECK(lay_liability_ceil(333, tk(1.01)) == 4);
    CHECK(lay_liability_floor(333, tk(1.01)) == 3);
    CHECK(lay_liability_ceil(1000, tk(22.0)) == 21000);
    CHECK(lay_liability_floor(1000, tk(22.0)) == 21000);
  }

  TEST_CASE("cancellation") {
    Exchange ex(1, funded(2, 1'000'000));
    SUBCASE("open order") {
      const auto r = ex.submit_order(req(0, 0, Side::Back, 4.0, 5000));
      CHECK(ex.cancel_order(r.order_id).cancelled == 5000);
      CHECK(ex.cell(0, Side::Back, tk(4.0)) == 0);
      CHECK(ex.account(0).escrow == 0);
      CHECK(ex.order(r.order_id).status == OrderStatus::Cancelled);
    }
    SUBCASE("part-filled order keeps its matched part") {
      const auto r = ex.submit_order(req(0, 0, Side::Back, 4.0, 10000));
      ex.submit_order(req(1, 0, Side::Lay, 4.0, 8000));
      const auto matched_before = ex.matched();
      CHECK(ex.cancel_order(r.order_id).cancelled == 2000);
      CHECK(ex.matched() == matched_before);
      CHECK(ex.order(r.order_id).matched() == 8000);
      CHECK(ex.account(0).escrow == 8000);
    }
    SUBCASE("second cancel is a no-op") {
      const auto r = ex.submit_order(req(0, 0, Side::Back, 4.0, 5000));
      ex.cancel_order(r.order_id);
      CHECK(ex.cancel_order(r.order_id).cancelled == 0);
    }
    SUBCASE("unknown id") { CHECK_THROWS_AS(ex.cancel_order(99), std::out_of_range); }
  }

  TEST_CASE("going in-play cancels every unmatched remainder") {
    SUBCASE("seven open orders") {
      Exchange ex(3, funded(7, 1'000'000));
      for (int b = 0; b < 7; ++b) ex.submit_order(req(b, b % 3, b % 2 ? Side::Back : Side::Lay, b % 2 ? 5.0 : 3.0, 1000));
      CHECK(ex.transition_in_play() == 7);
      for (int c = 0; c < 3; ++c) CHECK(ladder_view(ex, c).empty());
      for (const auto& a : ex.accounts()) CHECK(a.escrow == 0);
      CHECK(ex.phase() == MarketPhase::InPlay);
    }
    SUBCASE("one part-filled order") {
      Exchange ex(1, funded(2, 1'000'000));
      ex.submit_order(req(0, 0, Side::Back, 4.0, 10000));
      ex.submit_order(req(1, 0, Side::Lay, 4.0, 4000));
      CHECK(ex.transition_in_play() == 1);
      CHECK(ex.matched().size() == 1);
      CHECK(ladder_view(ex, 0).empty());
    }
    SUBCASE("empty book") {
      Exchange ex(1, funded(1, 100));
      CHECK(ex.transition_in_play() == 0);
      CHECK_THROWS_AS(ex.transition_in_play(), StateError);
    }
  }

  TEST_CASE("closing the market expires unmatched remainders") {
    SUBCASE("open orders") {
      Exchange ex(2, funded(3, 1'000'000));
      CHECK_THROWS_AS(ex.close_market(), StateError);
      ex.transition_in_play();
      for (int b = 0; b < 3; ++b) ex.submit_order(req(b, b % 2, Side::Back, 6.0, 1000));
      CHECK(ex.close_market() == 3);
      CHECK(ex.order(1).status == OrderStatus::Expired);
      for (const auto& a : ex.accounts()) CHECK(a.escrow == 0);
    }
    SUBCASE("part-filled order") {
      Exchange ex(1, funded(2, 1'000'000));
      ex.transition_in_play();
      ex.submit_order(req(0, 0, Side::Back, 4.0, 10000));
      ex.submit_order(req(1, 0, Side::Lay, 4.0, 4000));
      CHECK(ex.close_market() == 1);
      CHECK(ex.matched().size() == 1);
    }
    SUBCASE("empty book") {
      Exchange ex(1, funded(1, 100));
      ex.transition_in_play();
      CHECK(ex.close_market() == 0);
      CHECK(ex.phase() == MarketPhase::Closed);
      CHECK_THROWS_AS(ex.close_market(), StateError);
    }
  }

  TEST_CASE("settlement arithmetic") {
    SUBCASE("$10 back at 22.0 on the winner") {
      const auto [backer, layer] = settle_pair(Side::Back, 22.0, 1000, true, 0.0);
      CHECK(backer == 21000);
      CHECK(layer == -21000);
    }
    SUBCASE("same bet with 5% commission") {
      const auto [backer, layer] = settle_pair(Side::Back, 22.0, 1000, true, 0.05);
      CHECK(backer == 19950);
      CHECK(layer == -21000);
    }
    SUBCASE("the lay side mirrors it") {
      const auto [layer, backer] = settle_pair(Side::Lay, 22.0, 1000, true, 0.0);
      CHECK(layer == -21000);
      CHECK(backer == 21000);
      const auto [layer2, backer2] = settle_pair(Side::Lay, 22.0, 1000, false, 0.05);
      CHECK(layer2 == 950);
      CHECK(backer2 == -1000);
    }
    SUBCASE("$20 lay at 11 on a loser") {
      const auto [layer, backer] = settle_pair(Side::Lay, 11.0, 2000, false, 0.0);
      CHECK(layer == 2000);
      CHECK(backer == -2000);
    }
    SUBCASE("net winner of $100 pays 5%, the loser pays nothing") {
      const auto [backer, layer] = settle_pair(Side::Back, 2.0, 10000, true, 0.05);
      CHECK(backer == 9500);
      CHECK(layer == -10000);
    }
  }

  TEST_CASE("commission is charged on net market winnings per bettor") {
    Exchange ex(2, funded(3, 1'000'000));
    // Bettor 0 backs both runners against bettor 1; nets +$10 after winning $20 on one and losing $10.
    ex.submit_order(req(1, 0, Side::Lay, 3.0, 1000));
    ex.submit_order(req(0, 0, Side::Back, 3.0, 1000));
    ex.submit_order(req(1, 1, Side::Lay, 3.0, 1000));
    ex.submit_order(req(0, 1, Side::Back, 3.0, 1000));
    ex.transition_in_play();
    ex.close_market();
    const auto rep = ex.settle(0, 0.05);
    REQUIRE(rep.bettors.size() == 2);
    CHECK(rep.bettors[0].gross == 1000);
    CHECK(rep.bettors[0].commission == 50);
    CHECK(rep.bettors[1].gross == -1000);
    CHECK(rep.bettors[1].commission == 0);
    CHECK(ex.commission_pot() == 50);
    CHECK(ex.account(0).balance == 1'000'000 + 950);
  }

  TEST_CASE("settlement preconditions") {
    Exchange ex(2, funded(1, 100));
    CHECK_THROWS_AS(ex.settle(0, 0.05), StateError);
    ex.transition_in_play();
    ex.close_market();
    CHECK_THROWS_AS(ex.settle(2, 0.05), std::invalid_argument);
    ex.settle(1, 0.05);
    CHECK(ex.settled());
    CHECK_THROWS_AS(ex.settle(1, 0.05), StateError);
  }

  TEST_CASE("grid view") {
    Exchange ex(3, funded(2, 10'000'000));
    SUBCASE("empty book") {
      for (const auto& row : grid_view(ex, 3)) {
        CHECK(row.back.empty());
        CHECK(row.lay.empty());
      }
    }
    SUBCASE("single entries") {
      ex.submit_order(req(0, 1, Side::Back, 4.0, 5000));
      ex.submit_order(req(1, 1, Side::Lay, 3.6, 3000));
      const auto rows = grid_view(ex, 3);
      REQUIRE(rows.front().competitor == 1);
      REQUIRE(rows.front().back.size() == 1);
      CHECK(rows.front().back[0] == std::make_pair(tk(4.0), Money{5000}));
      REQUIRE(rows.front().lay.size() == 1);
      CHECK(rows.front().lay[0] == std::make_pair(tk(3.6), Money{3000}));
    }
    SUBCASE("depth limits the cells from the touch outward") {
      for (double o : {5.0, 4.0, 6.0, 4.5, 5.5}) ex.submit_order(req(0, 0, Side::Back, o, 100));
      const auto rows = grid_view(ex, 3);
      const auto& row = rows.front();
      REQUIRE(row.back.size() == 3);
      CHECK(row.back[0].first == tk(4.0));
      CHECK(row.back[1].first == tk(4.5));
      CHECK(row.back[2].first == tk(5.0));
    }
    SUBCASE("rows sort by favourite odds") {
      ex.submit_order(req(0, 0, Side::Back, 8.0, 100));
      ex.submit_order(req(0, 2, Side::Back, 2.0, 100));
      const auto rows = grid_view(ex, 1);
      CHECK(rows[0].competitor == 2);
      CHECK(rows[1].competitor == 0);
      CHECK(rows[2].competitor == 1);
    }
    CHECK_THROWS_AS(grid_view(ex, 0), std::invalid_argument);
  }

  TEST_CASE("ladder view") {
    Exchange ex(2, funded(3, 1'000'000));
    CHECK(ladder_view(ex, 0).empty());
    ex.submit_order(req(0, 0, Side::Lay, 2.5, 1000));
    ex.submit_order(req(1, 0, Side::Lay, 2.5, 1000));
    ex.submit_order(req(2, 0, Side::Back, 2.8, 700));
    const auto lv = ladder_view(ex, 0);
    REQUIRE(lv.size() == 2);
    CHECK(lv[0].odds == tk(2.5));
    CHECK(lv[0].lay == 2000);
    CHECK(lv[1].back == 700);
    const auto rows = grid_view(ex, 3);
    for (const auto& row : rows) {
      if (row.competitor != 0) continue;
      CHECK(row.lay[0].second == lv[0].lay);
      CHECK(row.back[0].second == lv[1].back);
    }
    CHECK_THROWS_AS(ladder_view(ex, 2), std::out_of_range);
  }

  TEST_CASE("random streams agree with the reference matcher") {
    for (int k = 0; k < 200; ++k) {
      Rng rng = make_rng(derive_seed(31, "stream", static_cast<std::uint64_t>(k)));
      const int n_comp = static_cast<int>(uniform_int(rng, 1, 6));
      const int n_ops = static_cast<int>(uniform_int(rng, 1, 500));
      const auto ops = random_stream(rng, n_ops, n_comp, 8);
      for (MatchingMode mode : {MatchingMode::Crossing, MatchingMode::Strict}) {
        INFO("stream " << k);
        CHECK(compare_with_reference(ops, n_comp, 8, mode) == "");
      }
    }
  }

  TEST_CASE("random streams keep the book and the money consistent") {
    for (int k = 0; k < 60; ++k) {
      Rng rng = make_rng(derive_seed(32, "stream", static_cast<std::uint64_t>(k)));
      const int n_comp = static_cast<int>(uniform_int(rng, 1, 6));
      const auto ops = random_stream(rng, 300, n_comp, 6);
      const MatchingMode mode = k % 2 ? MatchingMode::Strict : MatchingMode::Crossing;
      // Modest balances so that some orders are refused for lack of funds.
      Exchange ex(n_comp, funded(6, 60'000), ExchangeConfig{mode});
      const Money total = ex.total_money();
      std::vector<OrderId> ids;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i == ops.size() / 2) ex.transition_in_play();
        const auto& op = ops[i];
        if (op.cancel && !ids.empty()) {
          ex.cancel_order(ids[op.cancel_pick % ids.size()]);
        } else {
          const auto rep = ex.submit_order(op.req);
          if (rep.accepted) ids.push_back(rep.order_id);
          for (const auto& m : rep.matches) {
            // Each fill moves equal and opposite amounts between the two sides.
            REQUIRE(m.stake > 0);
            REQUIRE(m.odds == ex.order(m.back_order == rep.order_id ? m.lay_order : m.back_order).odds);
          }
        }
        REQUIRE(ex.total_money() == total);
        check_book_invariants(ex);
      }
      ex.close_market();
      const auto rep = ex.settle(static_cast<int>(uniform_int(rng, 0, n_comp - 1)), 0.05);
      REQUIRE(ex.total_money() == total);
      Money net = 0;
      for (const auto& b : rep.bettors) net += b.gross;
      CHECK(net == 0);
      for (const auto& a : ex.accounts()) CHECK(a.escrow == 0);
      CHECK(ex.commission_pot() == rep.total_commission);
    }
  }

  TEST_CASE("journal replay rebuilds the market") {
    Rng rng = make_rng(77);
    const auto ops = random_stream(rng, 400, 4, 5);
    Exchange ex(4, funded(5, 80'000));
    std::vector<OrderId> ids;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      ex.set_time_ms(static_cast<std::int64_t>(i) * 10);
      if (i == 200) ex.transition_in_play();
      if (ops[i].cancel && !ids.empty()) {
        ex.cancel_order(ids[ops[i].cancel_pick % ids.size()]);
      } else if (const auto rep = ex.submit_order(ops[i].req); rep.accepted) {
        ids.push_back(rep.order_id);
      }
    }
    ex.close_market();
    ex.settle(2, 0.05);

    int steps = 0;
    const Exchange re = replay_journal(ex.journal(), 4, funded(5, 80'000), {}, [&](const Exchange& e, const JournalEntry&) {
      ++steps;
      REQUIRE(e.total_money() == 5 * 80'000);
    });
    CHECK(steps > 0);
    CHECK(re.matched() == ex.matched());
    CHECK(re.journal().size() == ex.journal().size());
    for (int b = 0; b < 5; ++b) {
      CHECK(re.account(b).balance == ex.account(b).balance);
      CHECK(re.account(b).escrow == ex.account(b).escrow);
    }
    CHECK(re.commission_pot() == ex.commission_pot());
  }

  TEST_CASE("journal cell changes track aggregates") {
    Exchange ex(2, funded(3, 1'000'000));
    ex.submit_order(req(0, 0, Side::Lay, 3.0, 1000));
    ex.submit_order(req(1, 0, Side::Back, 3.0, 400));
    const auto& j = ex.journal();
    REQUIRE(j.size() == 3);
    CHECK(j[0].cells == std::vector<CellChange>{{0, Side::Lay, tk(3.0), 1000}});
    CHECK(j[1].kind == EventKind::Submit);
    CHECK(j[1].cells.empty());
    CHECK(j[2].kind == EventKind::Match);
    CHECK(j[2].cells == std::vector<CellChange>{{0, Side::Lay, tk(3.0), 600}});
  }
}
