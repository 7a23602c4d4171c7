#include "bbe/orchestrator.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "bbe/digest.hpp"

namespace bbe {
namespace {

constexpr double kTimeEps = 1e-9;

std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }

bool uses_model(const BettorSpec& b) {
  return std::holds_alternative<RationalPredictor>(b.strategy) || std::holds_alternative<Representative>(b.strategy);
}

bool betting_should_close(const RaceState& s, const BettingClose& bc) {
  if (bc.nth_finisher == 0) return s.over();
  return s.finished_count() >= bc.nth_finisher;
}

class Session {
public:
  explicit Session(const SessionConfig& cfg)
      : cfg_(cfg),
        streams_(RaceStreams::derive(cfg.seed, cfg.race.race_id, cfg.field)),
        state_(start_race(cfg.race, cfg.field, streams_)),
        recorder_(cfg.race, cfg.field, cfg.seed),
        ex_(static_cast<int>(cfg.field.size()), initial_accounts(cfg), ExchangeConfig{cfg.matching}),
        traded_(cfg.field.size(), 0) {
    recorder_.record(state_);
    pre_history_.push_back(state_.positions);
    for (const auto& b : cfg_.bettors) bettors_.push_back(init_bettor(b, cfg_.seed, 0.0));
  }

  SessionRecord run() {
    rec_.seed = cfg_.seed;
    rec_.epoch_ms = cfg_.epoch_ms;
    rec_.pre_race_duration = cfg_.pre_race_duration;
    rec_.matching = cfg_.matching;
    rec_.initial_accounts = ex_.accounts();
    for (const auto& b : cfg_.bettors) rec_.bettor_strategies.emplace_back(strategy_name(b.strategy));

    const double dt = cfg_.race.tick;
    const double pre = cfg_.pre_race_duration;
    std::int64_t step = 0;

    // Pre-race: the field stands at the start; bettors form starting prices.
    for (std::int64_t k = 0; static_cast<double>(k) * dt < pre - kTimeEps; ++k) {
      const double s = static_cast<double>(k) * dt;
      ex_.set_time_ms(to_ms(s));
      decide_and_apply(s, pre_history_, step++);
      record_market(s - pre);
    }

    ex_.set_time_ms(to_ms(pre));
    ex_.transition_in_play();

    bool open = true;
    while (!state_.over()) {
      if (state_.tick >= kMaxRaceTicks) throw ConfigError("race did not finish within the tick limit");
      advance_tick(state_, cfg_.race, cfg_.field, streams_);
      recorder_.record(state_);
      if (!open) continue;
      const double s = pre + state_.t;
      ex_.set_time_ms(to_ms(s));
      if (betting_should_close(state_, cfg_.race.betting_close)) {
        ex_.close_market();
        rec_.betting_closed_at = state_.t;
        open = false;
      } else {
        decide_and_apply(s, recorder_.history(), step++);
      }
      record_market(state_.t);
    }
    if (open) {
      ex_.close_market();
      rec_.betting_closed_at = state_.t;
    }

    rec_.race = recorder_.finish(state_, cfg_.field);
    rec_.settlement = ex_.settle(rec_.winner(), cfg_.commission_rate);
    rec_.final_accounts = ex_.accounts();
    for (std::size_t i = 0; i < rec_.final_accounts.size(); ++i)
      rec_.pnl.push_back(rec_.final_accounts[i].balance - rec_.initial_accounts[i].balance);
    rec_.commission_pot = ex_.commission_pot();
    rec_.journal = ex_.journal();
    return std::move(rec_);
  }

private:
  static std::vector<Account> initial_accounts(const SessionConfig& cfg) {
    std::vector<Account> out;
    for (const auto& b : cfg.bettors) out.push_back(Account{b.id, b.initial_balance, 0});
    return out;
  }

  Observation market_view(double s, std::span<const Eigen::VectorXd> history) const {
    Observation obs;
    obs.t = s;
    obs.phase = ex_.phase();
    obs.race = &cfg_.race;
    obs.field = cfg_.field;
    obs.state = &state_;
    obs.history = history;
    for (int c = 0; c < ex_.competitors(); ++c) {
      obs.touches.push_back(ex_.touch(c));
      obs.last_traded.push_back(ex_.last_traded(c));
    }
    return obs;
  }

  void decide_and_apply(double s, std::span<const Eigen::VectorXd> history, std::int64_t step) {
    std::vector<std::size_t> due;
    bool need_shared = false;
    for (std::size_t i = 0; i < bettors_.size(); ++i) {
      if (bettors_[i].next_due <= s + kTimeEps) {
        due.push_back(i);
        need_shared = need_shared || uses_model(cfg_.bettors[i]);
      }
    }
    if (due.empty()) return;

    std::optional<ProbEstimate> shared;
    if (need_shared && cfg_.belief_mode == BeliefMode::Shared) {
      Rng rng = make_rng(derive_seed(cfg_.seed, "shared", static_cast<std::uint64_t>(step)));
      shared = estimate_probs(state_, cfg_.race, cfg_.field, BeliefProfile{cfg_.shared_dryruns, {}, 0.0}, rng);
    }

    // Every due bettor sees the same snapshot; actions are applied afterwards in ascending id.
    const Observation base = market_view(s, history);
    std::vector<Decision> decisions;
    decisions.reserve(due.size());
    for (std::size_t i : due) {
      const auto& spec = cfg_.bettors[i];
      Observation obs = base;
      obs.shared_estimate = shared ? &*shared : nullptr;
      obs.balance = ex_.account(spec.id).balance;
      for (OrderId id : ex_.open_orders(spec.id)) {
        const Order& o = ex_.order(id);
        obs.own_orders.push_back(OwnOrder{o.id, o.competitor, o.side, o.odds, o.unmatched,
                                          static_cast<double>(o.arrival_ms) / 1000.0});
      }
      auto& st = bettors_[i];
      decisions.push_back(step_bettor(spec, st, obs));
      while (st.next_due <= s + kTimeEps) st.next_due += spec.revise_interval;
    }

    for (std::size_t k = 0; k < due.size(); ++k) {
      const auto& spec = cfg_.bettors[due[k]];
      const Decision& d = decisions[k];
      rec_.beliefs.push_back(BeliefSample{spec.id, s - cfg_.pre_race_duration, d.pick.competitor, d.pick.belief});
      if (d.pick.fallback) ++rec_.btf_fallbacks;
      for (const auto& a : d.actions) {
        if (const auto* sub = std::get_if<SubmitAction>(&a)) {
          ex_.submit_order(OrderRequest{spec.id, sub->competitor, sub->side, sub->odds, sub->stake});
        } else {
          const auto& c = std::get<CancelAction>(a);
          if (ex_.order(c.id).bettor != spec.id) throw StateError("bettor attempted to cancel another bettor's order");
          ex_.cancel_order(c.id);
        }
      }
    }
  }

  void record_market(double t) {
    const auto& m = ex_.matched();
    for (; matched_seen_ < m.size(); ++matched_seen_)
      traded_[static_cast<std::size_t>(m[matched_seen_].competitor)] += m[matched_seen_].stake;

    MarketTick tick;
    tick.t = t;
    tick.phase = ex_.phase();
    for (int c = 0; c < ex_.competitors(); ++c) {
      CompetitorQuote q;
      const Touch touch = ex_.touch(c);
      q.best_back = touch.best_back;
      q.best_lay = touch.best_lay;
      if (touch.best_back) q.back_size = ex_.cell(c, Side::Back, *touch.best_back);
      if (touch.best_lay) q.lay_size = ex_.cell(c, Side::Lay, *touch.best_lay);
      q.last_traded = ex_.last_traded(c);
      q.traded = traded_[static_cast<std::size_t>(c)];
      tick.quotes.push_back(q);
    }
    rec_.market.push_back(std::move(tick));
  }

  const SessionConfig& cfg_;
  RaceStreams streams_;
  RaceState state_;
  TrajectoryRecorder recorder_;
  std::vector<Eigen::VectorXd> pre_history_;
  Exchange ex_;
  std::vector<BettorState> bettors_;
  std::vector<Money> traded_;
  std::size_t matched_seen_{0};
  SessionRecord rec_;
};

} // namespace

void SessionConfig::validate() const {
  if (bettors.size() < 2) throw ConfigError("a session needs at least two bettors");
  if (field.size() < 2) throw ConfigError("a session needs at least two competitors");
  if (!(pre_race_duration >= 0.0) || !std::isfinite(pre_race_duration))
    throw ConfigError("pre_race_duration must be >= 0");
  if (!(commission_rate >= 0.0 && commission_rate <= 1.0)) throw ConfigError("commission rate must lie in [0,1]");
  if (belief_mode == BeliefMode::Shared && shared_dryruns < 1) throw ConfigError("shared belief mode needs dry-runs >= 1");
  race.validate(field);
  for (std::size_t i = 0; i < bettors.size(); ++i) {
    if (bettors[i].id != static_cast<BettorId>(i)) throw ConfigError("bettor ids must be 0..B-1 in order");
    bettors[i].validate(race.tick);
  }
}

SessionRecord run_session(const SessionConfig& cfg) {
  cfg.validate();
  return Session(cfg).run();
}

// ---------------------------------------------------------------------------
// Population

void PopulationSpec::validate() const {
  if (count < 2) throw ConfigError("population needs at least two bettors");
  const double w[] = {zi, lw, ud, btf, linex, rp, rb};
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigError("strategy weights must be >= 0");
    sum += x;
  }
  if (!(sum > 0.0)) throw ConfigError("strategy weights must not all be zero");
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw ConfigError(std::string(what) + " range must satisfy lo <= hi");
  };
  range(revise_lo, revise_hi, "revise interval");
  range(model_revise_lo, model_revise_hi, "model revise interval");
  range(improve_lo, improve_hi, "improve_after");
  range(shade_lo, shade_hi, "shade");
  range(ud_gap_lo, ud_gap_hi, "underdog gap");
  range(linex_window_lo, linex_window_hi, "linex window");
  range(bias_lo, bias_hi, "bias");
  if (dryruns_lo < 0 || dryruns_lo > dryruns_hi) throw ConfigError("dry-run range must satisfy 0 <= lo <= hi");
  if (initial_balance < 0) throw ConfigError("initial balance must be >= 0");
}

std::vector<BettorSpec> generate_population(const PopulationSpec& pop, std::uint64_t seed) {
  pop.validate();
  Rng rng = make_rng(derive_seed(seed, "population"));
  const double w[] = {pop.zi, pop.lw, pop.ud, pop.btf, pop.linex, pop.rp, pop.rb};
  constexpr int kKinds = 7;
  double sum = 0.0;
  for (double x : w) sum += x;

  // Largest-remainder apportionment of the strategy mix.
  int counts[kKinds];
  std::pair<double, int> rem[kKinds];
  int assigned = 0;
  for (int k = 0; k < kKinds; ++k) {
    const double exact = w[k] / sum * pop.count;
    counts[k] = static_cast<int>(std::floor(exact));
    rem[k] = {exact - counts[k], k};
    assigned += counts[k];
  }
  std::stable_sort(std::begin(rem), std::end(rem), [](auto a, auto b) { return a.first > b.first; });
  for (int i = 0; assigned < pop.count; ++i, ++assigned) ++counts[rem[i % kKinds].second];

  std::vector<int> kinds;
  for (int k = 0; k < kKinds; ++k) kinds.insert(kinds.end(), static_cast<std::size_t>(counts[k]), k);
  std::shuffle(kinds.begin(), kinds.end(), rng);

  auto profile = [&] {
    BeliefProfile p;
    p.dryruns = static_cast<int>(uniform_int(rng, pop.dryruns_lo, pop.dryruns_hi));
    p.param_noise = pop.param_noise;
    p.post_noise = pop.post_noise;
    return p;
  };

  std::vector<BettorSpec> out;
  for (int i = 0; i < pop.count; ++i) {
    BettorSpec b;
    b.id = i;
    b.initial_balance = pop.initial_balance;
    b.max_open_orders = pop.max_open_orders;
    b.quote.aggression_cap = pop.aggression_cap;
    b.quote.improve_cap = pop.improve_cap;
    b.quote.shade = uniform(rng, pop.shade_lo, pop.shade_hi);
    b.improve_after = uniform(rng, pop.improve_lo, pop.improve_hi);
    b.confidence = std::clamp(gaussian(rng, pop.confidence, pop.confidence_sd), 0.05, 0.95);
    b.p_back = pop.p_back;
    b.stake_min = pop.stake_min;
    b.stake_max = pop.stake_max;
    switch (kinds[static_cast<std::size_t>(i)]) {
      case 0: b.strategy = ZeroIntelligence{}; break;
      case 1: b.strategy = LeaderWins{}; break;
      case 2: b.strategy = Underdog{uniform(rng, pop.ud_gap_lo, pop.ud_gap_hi)}; break;
      case 3: b.strategy = BackTheFavourite{}; break;
      case 4: b.strategy = Linex{uniform(rng, pop.linex_window_lo, pop.linex_window_hi)}; break;
      case 5: b.strategy = RationalPredictor{profile()}; break;
      default: {
        Representative rb;
        rb.bias_strength = uniform(rng, pop.bias_lo, pop.bias_hi);
        rb.profile = profile();
        b.strategy = rb;
      }
    }
    b.revise_interval = uses_model(b) ? uniform(rng, pop.model_revise_lo, pop.model_revise_hi)
                                      : uniform(rng, pop.revise_lo, pop.revise_hi);
    out.push_back(std::move(b));
  }
  return out;
}

Field generate_field(int n, std::uint64_t seed, Eigen::Index n_factors) {
  if (n < 1) throw ConfigError("field needs at least one competitor");
  Rng rng = make_rng(derive_seed(seed, "field"));
  Field field;
  for (int i = 0; i < n; ++i) {
    const double lo = uniform(rng, 12.0, 14.0);
    const double hi = lo + uniform(rng, 4.0, 8.0);
    field.push_back(
        random_competitor(i, "C" + std::to_string(i + 1), StepDistribution::uniform(lo, hi), n_factors, rng));
  }
  return field;
}

// ---------------------------------------------------------------------------
// Batch

std::uint64_t session_seed(std::uint64_t master, int index) {
  return derive_seed(master, "session", static_cast<std::uint64_t>(index));
}

std::vector<BatchEntry> run_batch(const SessionConfig& tmpl, int m, int workers, const std::filesystem::path& out,
                                  const SessionWriter& writer) {
  namespace fs = std::filesystem;
  if (m < 1) throw ConfigError("batch size must be >= 1");
  if (workers < 1) throw ConfigError("worker count must be >= 1");
  tmpl.validate();
  fs::create_directories(out);

  std::vector<BatchEntry> entries(static_cast<std::size_t>(m));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < m; i = next++) {
      auto& e = entries[static_cast<std::size_t>(i)];
      e.index = i;
      e.seed = session_seed(tmpl.seed, i);
      try {
        SessionConfig cfg = tmpl;
        cfg.seed = e.seed;
        const SessionRecord rec = run_session(cfg);
        char name[32];
        std::snprintf(name, sizeof name, "session_%06d", i);
        const fs::path dir = out / name;
        fs::create_directories(dir);
        for (const auto& p : writer(rec, dir))
          e.files.push_back(BatchFile{fs::relative(p, out).generic_string(), sha256_file(p)});
        e.ok = true;
      } catch (const std::exception& ex) {
        e.ok = false;
        e.error = ex.what();
        e.files.clear();
      }
    }
  };
  const int n_threads = std::min(workers, m);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::ofstream manifest(out / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + (out / "manifest.jsonl").string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["index"] = e.index;
    j["seed"] = e.seed;
    j["status"] = e.ok ? "ok" : "error";
    if (!e.ok) j["error"] = e.error;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : e.files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}});
    manifest << j.dump() << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing batch manifest");
  return entries;
}

// ---------------------------------------------------------------------------
// Liquidity

std::int64_t min_bettors(int n_runners, int depth) {
  if (n_runners < 1 || depth < 1) throw std::invalid_argument("min_bettors needs n >= 1 and depth >= 1");
  return 4LL * depth * n_runners;
}

double nonempty_market_prob(int n_runners) {
  if (n_runners < 1) throw std::invalid_argument("nonempty_market_prob needs n >= 1");
  const double n = n_runners;
  return std::exp(std::lgamma(n + 1.0) - n * std::log(n));
}

double simulate_nonempty_frequency(int n_runners, int trials, std::uint64_t seed, LiquidityModel model) {
  if (n_runners < 1 || trials < 1) throw std::invalid_argument("liquidity simulation needs n >= 1 and trials >= 1");
  const OddsTick tick = *tick_from_centi(200);
  const int bettors = 2 * n_runners;
  int hits = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(derive_seed(seed, "liquidity", static_cast<std::uint64_t>(trial)));
    std::vector<Account> accounts;
    for (int b = 0; b < bettors; ++b) accounts.push_back(Account{b, 1'000'000, 0});
    Exchange ex(n_runners, std::move(accounts));
    auto random_side = [&] { return canonical(rng) < 0.5 ? Side::Back : Side::Lay; };
    if (model == LiquidityModel::Paired) {
      for (int i = 0; i < n_runners; ++i) {
        const int c = static_cast<int>(uniform_int(rng, 0, n_runners - 1));
        const Side s = random_side();
        ex.submit_order(OrderRequest{2 * i, c, s, tick, 100});
        ex.submit_order(OrderRequest{2 * i + 1, c, s == Side::Back ? Side::Lay : Side::Back, tick, 100});
      }
    } else {
      for (int b = 0; b < bettors; ++b) {
        const int c = static_cast<int>(uniform_int(rng, 0, n_runners - 1));
        ex.submit_order(OrderRequest{b, c, random_side(), tick, 100});
      }
    }
    std::vector<bool> covered(static_cast<std::size_t>(n_runners), false);
    for (const auto& mb : ex.matched()) covered[static_cast<std::size_t>(mb.competitor)] = true;
    if (std::all_of(covered.begin(), covered.end(), [](bool x) { return x; })) ++hits;
  }
  return static_cast<double>(hits) / trials;
}

} // namespace bbe
