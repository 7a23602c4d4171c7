#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "bbe/orchestrator.hpp"
#include "bbe/race.hpp"
#include "scenarios.hpp"

using namespace bbe;
using namespace bbe::testing;

namespace {

// State for `field` at the given positions and last steps, with unjittered schedules.
RaceState state_at(const RaceConfig& cfg, const Field& field, const Eigen::VectorXd& d,
                    const Eigen::VectorXd& last) {
  auto streams = RaceStreams::derive(1, cfg.race_id, field);
  RaceState s = start_race(cfg, field, streams);
  s.positions = d;
  s.last_steps = last;
  for (std::size_t i = 0; i < field.size(); ++i) s.schedules[i] = field[i].schedule;
  return s;
}

double stddev(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

} // namespace

TEST_SUITE("race") {
  TEST_CASE("nearest competitor ahead") {
    const Eigen::Vector3d a(100, 150, 120);
    auto n = nearest_ahead(0, a);
    REQUIRE(n);
    CHECK(n->index == 2);
    CHECK(n->gap == 20.0);

    CHECK_FALSE(nearest_ahead(0, Eigen::Vector3d(200, 150, 120)));

    // Equal positions are not in front.
    n = nearest_ahead(0, Eigen::Vector3d(100, 100, 120));
    REQUIRE(n);
    CHECK(n->index == 2);
    CHECK(n->gap == 20.0);

    const auto b = nearest_behind(2, a);
    REQUIRE(b);
    CHECK(b->index == 0);
    CHECK(b->gap == 20.0);
  }

  TEST_CASE("preference coefficient") {
    Competitor c = plain_competitor(0, "a", 10, 20);
    c.preference = Eigen::Vector2d(0.3, 0.7);
    CHECK(preference_coeff(c, Eigen::Vector2d(0.3, 0.7)) == 1.0);

    c.preference = Eigen::Vector2d(0.0, 0.0);
    CHECK(preference_coeff(c, Eigen::Vector2d(1.0, 1.0)) == kMinMultiplier);

    c.preference = Eigen::VectorXd::Constant(1, 0.0);
    CHECK(preference_coeff(c, Eigen::VectorXd::Constant(1, 0.5)) == doctest::Approx(0.5));
    // Legacy form (k - |f - p|) / k with k = 2.
    CHECK(preference_coeff(c, Eigen::VectorXd::Constant(1, 0.5), PreferenceForm::Legacy, 2.0) ==
          doctest::Approx(0.75));

    CHECK_THROWS_AS(preference_coeff(c, Eigen::Vector2d(0.5, 0.5)), ConfigError);
  }

  TEST_CASE("responsiveness follows the phase schedule and spurs under pressure") {
    RaceConfig cfg = plain_race(1000.0);
    Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    f[0].schedule.phases = {{0.33, 0.8}, {1.0, 0.95}};
    f[0].spur_prob = 1.0;
    f[0].spur_boost = 1.1;
    f[0].theta_behind = 5.0;
    Rng rng = make_rng(3);

    RaceState s = state_at(cfg, f, Eigen::Vector2d(100, 0), Eigen::Vector2d(15, 15));
    CHECK(responsiveness(f[0], 0, s, cfg, rng) == doctest::Approx(0.8));
    s.positions = Eigen::Vector2d(500, 0);
    CHECK(responsiveness(f[0], 0, s, cfg, rng) == doctest::Approx(0.95));

    // Pursuer at gap 2 inside theta_behind = 5, spur certain.
    s.positions = Eigen::Vector2d(100, 98);
    CHECK(responsiveness(f[0], 0, s, cfg, rng) == doctest::Approx(0.88));

    cfg.interactions = false;
    CHECK(responsiveness(f[0], 0, s, cfg, rng) == doctest::Approx(0.8));
  }

  TEST_CASE("step size: free draw, blocked branch and sample mean") {
    RaceConfig cfg = plain_race(5000.0);
    Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    Rng rng = make_rng(11);

    RaceState s = state_at(cfg, f, Eigen::Vector2d(100, 0), Eigen::Vector2d(15, 15));
    for (int i = 0; i < 1000; ++i) {
      const auto r = step_size(f[0], 0, s, cfg, 1.0, 1.0, rng);
      REQUIRE_FALSE(r.blocked);
      REQUIRE(r.step >= 10.0);
      REQUIRE(r.step <= 20.0);
    }

    // Blocker one metre ahead, certain block, own last step 18, blocker's 5.
    f[0].theta_ahead = 5.0;
    f[0].block_prob = 1.0;
    s = state_at(cfg, f, Eigen::Vector2d(100, 101), Eigen::Vector2d(18, 5));
    const auto blocked = step_size(f[0], 0, s, cfg, 1.0, 1.0, rng);
    CHECK(blocked.blocked);
    CHECK(blocked.step == 5.0);
    REQUIRE(blocked.blocker);
    CHECK(*blocked.blocker == 1);

    // Unblocked mean of R * P * U(10,20) with R = 0.9, P = 0.5.
    s = state_at(cfg, f, Eigen::Vector2d(100, 0), Eigen::Vector2d(15, 15));
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += step_size(f[0], 0, s, cfg, 0.9, 0.5, rng).step;
    const double oracle = 0.9 * 0.5 * (10.0 + 20.0) / 2.0;
    CHECK(std::abs(sum / n - oracle) / oracle < 0.01);
  }

  TEST_CASE("a finished competitor ahead does not block") {
    RaceConfig cfg = plain_race(1000.0);
    Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    f[0].block_prob = 1.0;
    f[0].theta_ahead = 50.0;
    RaceState s = state_at(cfg, f, Eigen::Vector2d(990, 1000), Eigen::Vector2d(15, 1));
    s.finish_time[1] = 60.0;
    Rng rng = make_rng(2);
    CHECK_FALSE(step_size(f[0], 0, s, cfg, 1.0, 1.0, rng).blocked);
  }

  TEST_CASE("advance_tick finishes the last runner and then refuses to continue") {
    RaceConfig cfg = plain_race(100.0);
    Field f{plain_competitor(0, "a", 10, 10), plain_competitor(1, "b", 10, 10)};
    auto streams = RaceStreams::derive(5, cfg.race_id, f);
    RaceState s = start_race(cfg, f, streams);
    s.positions = Eigen::Vector2d(100, 95);
    s.finish_time[0] = 3.0;
    s.t = 4.0;
    CHECK_FALSE(s.over());
    advance_tick(s, cfg, f, streams);
    CHECK(s.over());
    CHECK(s.positions(1) == 100.0);
    CHECK(*s.finish_time[1] == doctest::Approx(4.5));
    CHECK_THROWS_AS(advance_tick(s, cfg, f, streams), StateError);
  }

  TEST_CASE("single deterministic runner finishes at exactly ten ticks") {
    RaceConfig cfg = plain_race(100.0);
    Field f{plain_competitor(0, "solo", 10, 10)};
    const RaceRecord r = run_race(cfg, f, 1);
    CHECK(r.finish_times[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(r.positions.rows() == 11);
    CHECK(r.positions(10, 0) == 100.0);
  }

  TEST_CASE("identical runners split wins evenly") {
    RaceConfig cfg = plain_race(2000.0, false);
    Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    int wins0 = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) wins0 += run_race(cfg, f, static_cast<std::uint64_t>(i)).finish_order[0] == 0;
    CHECK(std::abs(static_cast<double>(wins0) / n - 0.5) <= 0.02);
  }

  TEST_CASE("three-runner scenario: Circle, Triangle, Square is the modal result") {
    const Field f = three_runner_field();
    std::map<std::vector<int>, int> orders;
    int circle = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
      const auto r = run_race(three_runner_race(true), f, 1000 + static_cast<std::uint64_t>(i));
      ++orders[r.finish_order];
      circle += r.finish_order[0] == 0;
    }
    const auto modal = std::max_element(orders.begin(), orders.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    CHECK(modal->first == std::vector<int>{0, 1, 2});
    CHECK(circle > n / 2);
  }

  TEST_CASE("interactions widen the spread of Square's finish time") {
    const Field f = three_runner_field();
    std::vector<double> off, on;
    for (int i = 0; i < 100; ++i) {
      const auto seed = 500 + static_cast<std::uint64_t>(i);
      off.push_back(run_race(three_runner_race(false), f, seed).finish_times[2]);
      on.push_back(run_race(three_runner_race(true), f, seed).finish_times[2]);
    }
    CHECK(stddev(off) < stddev(on));
  }

  TEST_CASE("continuation from a snapshot") {
    SUBCASE("forced outcome") {
      RaceConfig cfg = plain_race(2000.0);
      Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20), plain_competitor(2, "c", 10, 20)};
      for (int k = 0; k < 200; ++k) {
        auto streams = RaceStreams::derive(static_cast<std::uint64_t>(k), cfg.race_id, f);
        RaceState s = start_race(cfg, f, streams);
        s.positions = Eigen::Vector3d(1990, 0, 0);
        REQUIRE(run_race_from(s, cfg, f, streams).front() == 0);
      }
    }
    SUBCASE("a start snapshot reproduces run_race") {
      const RaceConfig cfg = three_runner_race();
      const Field f = three_runner_field();
      for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
        auto streams = RaceStreams::derive(seed, cfg.race_id, f);
        RaceState s = start_race(cfg, f, streams);
        CHECK(run_race_from(s, cfg, f, streams) == run_race(cfg, f, seed).finish_order);
      }
    }
    SUBCASE("mismatched snapshot is rejected") {
      const RaceConfig cfg = three_runner_race();
      const Field f = three_runner_field();
      auto streams = RaceStreams::derive(1, cfg.race_id, f);
      RaceState s = start_race(cfg, f, streams);
      s.positions = Eigen::Vector2d(0, 0);
      CHECK_THROWS_AS(run_race_from(s, cfg, f, streams), ConfigError);
    }
  }

  TEST_CASE("win frequencies from a mid-race snapshot agree with a large ensemble") {
    const RaceConfig cfg = three_runner_race();
    const Field f = three_runner_field();
    auto streams = RaceStreams::derive(21, cfg.race_id, f);
    RaceState snap = start_race(cfg, f, streams);
    while (snap.t < 60.0 - 1e-9) advance_tick(snap, cfg, f, streams);

    auto freq = [&](std::uint64_t family, int n) {
      Eigen::Vector3d w = Eigen::Vector3d::Zero();
      for (int k = 0; k < n; ++k) {
        auto st = RaceStreams::derive(derive_seed(family, "cont", static_cast<std::uint64_t>(k)), cfg.race_id, f);
        w(run_race_from(snap, cfg, f, st).front()) += 1.0;
      }
      return Eigen::Vector3d(w / n);
    };
    const Eigen::Vector3d oracle = freq(777, 100000);
    const Eigen::Vector3d est = freq(5, 1000);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(est(c) - oracle(c)) <= 0.03);
  }

  TEST_CASE("random races: monotone progress, blocking bound, ordered finishes") {
    for (int r = 0; r < 400; ++r) {
      const auto seed = static_cast<std::uint64_t>(r);
      Field f = generate_field(2 + r % 7, seed);
      Rng prng = make_rng(derive_seed(seed, "params"));
      for (auto& c : f) {
        c.theta_ahead = uniform(prng, 0.0, 20.0);
        c.theta_behind = uniform(prng, 0.0, 20.0);
        c.block_prob = canonical(prng);
        c.spur_prob = canonical(prng);
        c.spur_boost = uniform(prng, 1.0, 1.3);
      }
      RaceConfig cfg = plain_race(uniform(prng, 300.0, 2500.0));
      cfg.factors = Eigen::Vector2d(canonical(prng), canonical(prng));
      auto streams = RaceStreams::derive(seed, cfg.race_id, f);
      RaceState s = start_race(cfg, f, streams);
      while (!s.over()) {
        const RaceState before = s;
        const TickReport rep = advance_tick(s, cfg, f, streams);
        for (Eigen::Index c = 0; c < s.size(); ++c) {
          if (before.finished(c)) {
            REQUIRE(s.positions(c) == before.positions(c));
            continue;
          }
          REQUIRE(s.positions(c) > before.positions(c));
          const auto& st = rep.steps[static_cast<std::size_t>(c)];
          if (st.blocked) {
            const double resp = rep.resp[static_cast<std::size_t>(c)];
            REQUIRE(st.step <= resp * before.last_steps(*st.blocker) + 1e-12);
            REQUIRE(st.step <= resp * before.last_steps(c) + 1e-12);
          }
        }
      }
      const auto order = finish_order(s, f);
      for (std::size_t i = 1; i < order.size(); ++i)
        REQUIRE(*s.finish_time[static_cast<std::size_t>(order[i - 1])] <=
                *s.finish_time[static_cast<std::size_t>(order[i])]);
    }
  }

  TEST_CASE("without interactions a runner's path ignores the rest of the field") {
    RaceConfig cfg = plain_race(2000.0, false);
    Field a{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    Field b{plain_competitor(0, "a", 10, 20), plain_competitor(1, "z", 14, 15), plain_competitor(2, "y", 5, 40)};
    b[1].schedule.phases = {{0.5, 0.7}, {1.0, 1.0}};
    for (std::uint64_t seed : {3u, 4u, 5u}) {
      const auto ra = run_race(cfg, a, seed);
      const auto rb = run_race(cfg, b, seed);
      CHECK(ra.finish_times[0] == rb.finish_times[0]);
      const auto rows = std::min(ra.positions.rows(), rb.positions.rows());
      CHECK(ra.positions.col(0).head(rows) == rb.positions.col(0).head(rows));
    }
  }

  TEST_CASE("identical seed gives an identical record") {
    const auto a = run_race(three_runner_race(), three_runner_field(), 8);
    const auto b = run_race(three_runner_race(), three_runner_field(), 8);
    CHECK(a.positions == b.positions);
    CHECK(a.times == b.times);
    CHECK(a.finish_order == b.finish_order);
    CHECK(a.finish_times == b.finish_times);
  }

  TEST_CASE("phase schedule realization keeps boundaries ordered") {
    PhaseSchedule p;
    p.phases = {{0.3, 0.8}, {0.32, 0.9}, {1.0, 1.0}};
    p.boundary_sd = 0.05;
    p.level_sd = 0.02;
    Rng rng = make_rng(1);
    for (int i = 0; i < 1000; ++i) {
      const auto r = p.realize(rng);
      REQUIRE(r.phases.size() == 3);
      REQUIRE(r.phases[0].end_frac <= r.phases[1].end_frac);
      REQUIRE(r.phases[2].end_frac == 1.0);
    }
  }

  TEST_CASE("configuration validation") {
    Field f{plain_competitor(0, "a", 10, 20), plain_competitor(1, "b", 10, 20)};
    RaceConfig cfg = plain_race();
    CHECK_NOTHROW(cfg.validate(f));

    auto bad = f;
    bad[0].schedule.phases = {{0.5, 0.6}, {1.0, 1.0}};
    CHECK_THROWS_AS(cfg.validate(bad), ConfigError);
    bad = f;
    bad[0].schedule.phases = {{0.6, 0.8}, {0.4, 0.8}, {1.0, 1.0}};
    CHECK_THROWS_AS(cfg.validate(bad), ConfigError);
    bad = f;
    bad[0].step = StepDistribution::uniform(0.0, 5.0);
    CHECK_THROWS_AS(cfg.validate(bad), ConfigError);
    bad = f;
    bad[1].id = 0;
    CHECK_THROWS_AS(cfg.validate(bad), ConfigError);

    RaceConfig c2 = cfg;
    c2.start_positions = Eigen::Vector3d(0, 0, 0);
    CHECK_THROWS_AS(c2.validate(f), ConfigError);
    c2.start_positions = Eigen::Vector2d(0, 2000);
    CHECK_THROWS_AS(c2.validate(f), ConfigError);
    c2 = cfg;
    c2.betting_close.nth_finisher = 3;
    CHECK_THROWS_AS(c2.validate(f), ConfigError);
    c2 = cfg;
    c2.factors = Eigen::Vector2d(0.5, 0.5);
    CHECK_THROWS_AS(c2.validate(f), ConfigError);  // competitors have no preference vector
  }

  TEST_CASE("lognormal steps are positive with the configured mean") {
    const auto d = StepDistribution::lognormal(std::log(15.0), 0.2);
    Rng rng = make_rng(6);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double x = d.draw(rng);
      REQUIRE(x > 0.0);
      sum += x;
    }
    CHECK(sum / n == doctest::Approx(15.0 * std::exp(0.02)).epsilon(0.01));
  }
}
