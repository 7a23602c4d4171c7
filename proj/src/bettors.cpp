#include "bbe/bettors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bbe {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double clamp_prob(double p) { return std::clamp(p, 1e-3, 1.0 - 1e-3); }

Money escrow_for(Side side, OddsTick odds, Money stake) {
  return side == Side::Back ? stake : lay_liability_ceil(stake, odds);
}

const BeliefProfile* profile_of(const Strategy& s) {
  if (const auto* rp = std::get_if<RationalPredictor>(&s)) return &rp->profile;
  if (const auto* rb = std::get_if<Representative>(&s)) return &rb->profile;
  return nullptr;
}

Eigen::VectorXd model_belief(const BeliefProfile& profile, const Observation& obs, Rng& rng, ModelCache* cache) {
  if (cache && cache->race_tick == obs.state->tick && cache->probs.size() == obs.state->size()) return cache->probs;
  Eigen::VectorXd p = obs.shared_estimate != nullptr && profile.dryruns > 0
                          ? add_post_noise(*obs.shared_estimate, profile.post_noise, rng).probs
                          : estimate_probs(*obs.state, *obs.race, obs.field, profile, rng).probs;
  if (cache) *cache = ModelCache{obs.state->tick, p};
  return p;
}

int random_pick(Eigen::Index n, Rng& rng) { return static_cast<int>(uniform_int(rng, 0, n - 1)); }

} // namespace

std::string_view strategy_name(const Strategy& s) {
  return std::visit(overloaded{
                        [](const ZeroIntelligence&) { return std::string_view{"ZI"}; },
                        [](const LeaderWins&) { return std::string_view{"LW"}; },
                        [](const Underdog&) { return std::string_view{"UD"}; },
                        [](const BackTheFavourite&) { return std::string_view{"BTF"}; },
                        [](const Linex&) { return std::string_view{"Linex"}; },
                        [](const RationalPredictor&) { return std::string_view{"RP"}; },
                        [](const Representative&) { return std::string_view{"RB"}; },
                    },
                    s);
}

void BettorSpec::validate(double race_tick) const {
  if (revise_interval < race_tick) throw ConfigError("bettor revise interval must be >= the race tick");
  if (improve_after < 0.0) throw ConfigError("improve_after must be >= 0");
  if (initial_balance < 0) throw ConfigError("initial balance must be >= 0");
  if (max_open_orders < 1) throw ConfigError("max_open_orders must be >= 1");
  if (quote.shade < 0.0 || quote.shade > 1.0) throw ConfigError("shade must lie in [0,1]");
  if (quote.aggression_cap < 0 || quote.improve_cap < 0) throw ConfigError("tick caps must be >= 0");
  if (confidence <= 0.0 || confidence >= 1.0) throw ConfigError("confidence must lie in (0,1)");
  if (p_back < 0.0 || p_back > 1.0) throw ConfigError("p_back must lie in [0,1]");
  if (stake_min <= 0 || stake_max < stake_min) throw ConfigError("stake range must satisfy 0 < min <= max");
  if (const auto* ud = std::get_if<Underdog>(&strategy); ud && ud->gap < 0.0)
    throw ConfigError("underdog gap must be >= 0");
  if (const auto* lx = std::get_if<Linex>(&strategy); lx && lx->window <= 0.0)
    throw ConfigError("linex window must be > 0");
  if (const auto* rb = std::get_if<Representative>(&strategy)) {
    if (rb->bias_strength < 0.0 || rb->bias_strength >= 1.0) throw ConfigError("bias strength must lie in [0,1)");
    if (rb->stake_multiples.empty()) throw ConfigError("RB needs at least one stake multiple");
    for (int m : rb->stake_multiples)
      if (m != 2 && m != 5 && m != 10) throw ConfigError("RB stake multiples must be drawn from {2, 5, 10}");
  }
  if (const auto* p = profile_of(strategy)) p->validate();
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

int argmin(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index i = 0;
  v.minCoeff(&i);
  return static_cast<int>(i);
}

Eigen::VectorXd conviction_belief(Eigen::Index n, int pick, double confidence) {
  if (n == 1) return Eigen::VectorXd::Ones(1);
  Eigen::VectorXd b = Eigen::VectorXd::Constant(n, (1.0 - confidence) / static_cast<double>(n - 1));
  b(pick) = confidence;
  return b;
}

Eigen::VectorXd longshot_distortion(const Eigen::Ref<const Eigen::VectorXd>& p, double bias_strength) {
  const double gamma = 1.0 - bias_strength;
  Eigen::VectorXd q = p.array().pow(gamma).matrix();
  return q / q.sum();
}

Eigen::VectorXd window_speeds(std::span<const Eigen::VectorXd> history, const RaceState& state, double tick,
                              double window) {
  const auto n = state.size();
  Eigen::VectorXd v(n);
  const auto len = static_cast<std::int64_t>(history.size());
  const auto k = std::max<std::int64_t>(1, std::llround(window / tick));
  const std::int64_t from = std::max<std::int64_t>(0, len - 1 - k);
  const double elapsed = static_cast<double>(len - 1 - from) * tick;
  if (len < 2 || elapsed <= 0.0) return state.last_steps / tick;
  v = (history[static_cast<std::size_t>(len - 1)] - history[static_cast<std::size_t>(from)]) / elapsed;
  for (Eigen::Index c = 0; c < n; ++c)
    if (!(v(c) > 0.0)) v(c) = state.last_steps(c) / tick;
  return v;
}

Eigen::VectorXd extrapolated_finish(const Eigen::Ref<const Eigen::VectorXd>& positions,
                                    const Eigen::Ref<const Eigen::VectorXd>& speeds, double track_length,
                                    double now, const RaceState* state) {
  Eigen::VectorXd out(positions.size());
  for (Eigen::Index c = 0; c < positions.size(); ++c) {
    if (state && state->finished(c)) {
      out(c) = *state->finish_time[static_cast<std::size_t>(c)];
    } else {
      out(c) = now + (track_length - positions(c)) / speeds(c);
    }
  }
  return out;
}

Pick pick(const BettorSpec& spec, const Observation& obs, Rng& rng) { return pick(spec, obs, rng, nullptr); }

Pick pick(const BettorSpec& spec, const Observation& obs, Rng& rng, ModelCache* cache) {
  const Eigen::VectorXd& d = obs.state->positions;
  const auto n = d.size();
  Pick out;
  auto heuristic = [&](int c) {
    out.competitor = c;
    out.belief = conviction_belief(n, c, spec.confidence);
  };

  std::visit(overloaded{
                 [&](const ZeroIntelligence&) {
                   out.competitor = random_pick(n, rng);
                   out.belief = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
                 },
                 [&](const LeaderWins&) { heuristic(argmax(d)); },
                 [&](const Underdog& ud) {
                   if (n < 2) {
                     heuristic(0);
                     return;
                   }
                   std::vector<int> idx(static_cast<std::size_t>(n));
                   for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
                   std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return d(a) > d(b); });
                   const int p1 = idx[0];
                   const int p2 = idx[1];
                   heuristic(d(p1) - d(p2) < ud.gap ? p2 : p1);
                 },
                 [&](const BackTheFavourite&) {
                   Eigen::VectorXd fav = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
                   bool any = false;
                   for (Eigen::Index c = 0; c < n; ++c) {
                     if (auto f = favourite_odds(obs.touches[static_cast<std::size_t>(c)])) {
                       fav(c) = *f;
                       any = true;
                     }
                   }
                   if (!any) {
                     for (Eigen::Index c = 0; c < n; ++c) {
                       if (const auto& lt = obs.last_traded[static_cast<std::size_t>(c)]) {
                         fav(c) = lt->value();
                         any = true;
                       }
                     }
                   }
                   if (any) {
                     heuristic(argmin(fav));
                   } else {
                     out.competitor = random_pick(n, rng);
                     out.belief = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
                     out.fallback = true;
                   }
                 },
                 [&](const Linex& lx) {
                   const Eigen::VectorXd v = window_speeds(obs.history, *obs.state, obs.race->tick, lx.window);
                   heuristic(argmin(extrapolated_finish(d, v, obs.race->track_length, obs.state->t, obs.state)));
                 },
                 [&](const RationalPredictor& rp) {
                   out.belief = model_belief(rp.profile, obs, rng, cache);
                   out.competitor = argmax(out.belief);
                 },
                 [&](const Representative& rb) {
                   out.belief = longshot_distortion(model_belief(rb.profile, obs, rng, cache), rb.bias_strength);
                   out.competitor = argmax(out.belief);
                 },
             },
             spec.strategy);
  return out;
}

OddsTick fair_tick(double p) { return nearest_tick(fair_decimal_odds(clamp_prob(p))); }

OddsTick quote_odds(double p, Side side, const Touch& touch, const QuoteParams& q) {
  const OddsTick fair = fair_tick(p);
  const int shift = static_cast<int>(std::lround(q.shade * q.aggression_cap));
  std::optional<OddsTick> ref;
  if (side == Side::Back) {
    ref = touch.best_back ? touch.best_back : touch.best_lay;
    OddsTick t = offset_tick(fair, shift);
    if (ref) t = std::min(t, offset_tick(*ref, q.improve_cap));
    return std::max(t, fair);
  }
  ref = touch.best_lay ? touch.best_lay : touch.best_back;
  OddsTick t = offset_tick(fair, -shift);
  if (ref) t = std::max(t, offset_tick(*ref, -q.improve_cap));
  return std::min(t, fair);
}

Money round_to_multiple(Money x, Money multiple) { return (x + multiple / 2) / multiple * multiple; }

Money affordable_stake(Money balance, Side side, OddsTick odds) {
  if (balance <= 0) return 0;
  if (side == Side::Back) return balance;
  return balance * 100 / (odds.centi() - 100);
}

Money stake_size(const BettorSpec& spec, Money affordable, Rng& rng) {
  const Money cap = std::min(spec.stake_max, affordable);
  if (cap < spec.stake_min) return 0;
  Money stake = uniform_int(rng, spec.stake_min, cap);
  if (const auto* rb = std::get_if<Representative>(&spec.strategy)) {
    const auto pick_ix = uniform_int(rng, 0, static_cast<std::int64_t>(rb->stake_multiples.size()) - 1);
    const Money m = rb->stake_multiples[static_cast<std::size_t>(pick_ix)] * kCentsPerUnit;
    stake = round_to_multiple(stake, m);
    if (stake > cap) stake = cap / m * m;
    if (stake < m) stake = m <= cap ? m : 0;
  }
  return stake;
}

BettorState init_bettor(const BettorSpec& spec, std::uint64_t session_seed, double first_decision_at) {
  BettorState s{make_rng(derive_seed(session_seed, "bettor", static_cast<std::uint64_t>(spec.id))), Side::Back, 0.0, {}};
  s.direction = canonical(s.rng) < spec.p_back ? Side::Back : Side::Lay;
  s.next_due = first_decision_at + uniform(s.rng, 0.0, spec.revise_interval);
  return s;
}

Decision step_bettor(const BettorSpec& spec, BettorState& state, const Observation& obs) {
  Decision dec;
  auto& rng = state.rng;
  dec.pick = pick(spec, obs, rng, &state.model_cache);
  const Eigen::VectorXd& belief = dec.pick.belief;
  const auto n = belief.size();

  Money balance = obs.balance;
  int kept = 0;
  std::vector<std::pair<int, Side>> live;

  for (const auto& o : obs.own_orders) {
    const double p = belief(o.competitor);
    const OddsTick fair = fair_tick(p);
    const bool consistent = o.side == Side::Back ? o.odds >= fair : o.odds <= fair;
    if (!consistent) {
      dec.actions.emplace_back(CancelAction{o.id});
      balance += escrow_for(o.side, o.odds, o.unmatched);
      continue;
    }
    if (obs.t - o.placed_at >= spec.improve_after) {
      // A stale order steps one tick toward the opposite touch, never past fair.
      const Touch& touch = obs.touches[static_cast<std::size_t>(o.competitor)];
      const auto opposite = o.side == Side::Back ? touch.best_lay : touch.best_back;
      if (opposite && *opposite != o.odds) {
        const OddsTick better =
            o.side == Side::Back ? std::max(offset_tick(o.odds, -1), fair) : std::min(offset_tick(o.odds, 1), fair);
        if (better != o.odds) {
          dec.actions.emplace_back(CancelAction{o.id});
          balance += escrow_for(o.side, o.odds, o.unmatched);
          const Money stake = std::min(o.unmatched, affordable_stake(balance, o.side, better));
          if (stake > 0) {
            dec.actions.emplace_back(SubmitAction{o.competitor, o.side, better, stake});
            balance -= escrow_for(o.side, better, stake);
            live.emplace_back(o.competitor, o.side);
            ++kept;
          }
          continue;
        }
      }
    }
    live.emplace_back(o.competitor, o.side);
    ++kept;
  }

  if (kept >= spec.max_open_orders) return dec;

  const Side side = state.direction;
  int target = dec.pick.competitor;
  if (side == Side::Lay && n > 1) {
    // Least-likely competitor other than the pick; ties broken at random.
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n; ++c)
      if (c != dec.pick.competitor) lo = std::min(lo, belief(c));
    std::vector<int> cands;
    for (Eigen::Index c = 0; c < n; ++c)
      if (c != dec.pick.competitor && belief(c) <= lo + 1e-12) cands.push_back(static_cast<int>(c));
    target = cands[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(cands.size()) - 1))];
  }
  for (const auto& [c, s] : live)
    if (c == target && s == side) return dec;

  const OddsTick odds = quote_odds(belief(target), side, obs.touches[static_cast<std::size_t>(target)], spec.quote);
  const Money stake = stake_size(spec, affordable_stake(balance, side, odds), rng);
  if (stake > 0) dec.actions.emplace_back(SubmitAction{target, side, odds, stake});
  return dec;
}

} // namespace bbe
