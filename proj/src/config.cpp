#include "bbe/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bbe/digest.hpp"
#include "json.hpp"

namespace bbe {
namespace {

using json = nlohmann::json;

/// Reads one JSON object, remembering which keys were used so leftovers can be reported.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T def) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return def;
    try {
      return it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key) + " is required");
    return get<T>(key, T{});
  }

  Money money(const std::string& key, Money def) {
    const double units = get<double>(key, static_cast<double>(def) / kCentsPerUnit);
    if (!std::isfinite(units)) throw ConfigError(where(key) + " must be finite");
    return std::llround(units * kCentsPerUnit);
  }

  std::pair<double, double> range(const std::string& key, std::pair<double, double> def) {
    const auto v = get<std::vector<double>>(key, {def.first, def.second});
    if (v.size() != 2) throw ConfigError(where(key) + " must be [lo, hi]");
    return {v[0], v[1]};
  }

  std::optional<Section> child(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    return Section(*it, where(key));
  }

  const json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown config key " + where(k));
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

RaceConfig parse_race(Section s) {
  RaceConfig r;
  r.race_id = s.get<std::string>("id", r.race_id);
  r.track_length = s.get<double>("track_length", r.track_length);
  r.tick = s.get<double>("tick", r.tick);
  r.interactions = s.get<bool>("interactions", r.interactions);
  const auto form = s.get<std::string>("preference_form", "normalized");
  if (form == "normalized") r.preference_form = PreferenceForm::Normalized;
  else if (form == "legacy") r.preference_form = PreferenceForm::Legacy;
  else throw ConfigError(s.where("preference_form") + " must be \"normalized\" or \"legacy\"");
  r.pref_k = s.get<double>("pref_k", r.pref_k);
  r.factors = vec(s.get<std::vector<double>>("factors", {}));
  r.start_positions = vec(s.get<std::vector<double>>("start_positions", {}));
  r.betting_close.nth_finisher = s.get<int>("betting_close", 0);
  s.finish();
  return r;
}

StepDistribution parse_step(Section s) {
  const auto kind = s.get<std::string>("kind", "uniform");
  StepDistribution d;
  if (kind == "uniform") {
    d = StepDistribution::uniform(s.require<double>("lo"), s.require<double>("hi"));
  } else if (kind == "lognormal") {
    d = StepDistribution::lognormal(s.require<double>("mu"), s.require<double>("sigma"));
  } else {
    throw ConfigError(s.where("kind") + " must be \"uniform\" or \"lognormal\"");
  }
  s.finish();
  return d;
}

Competitor parse_competitor(Section s, int id) {
  Competitor c;
  c.id = id;
  c.name = s.get<std::string>("name", "C" + std::to_string(id + 1));
  auto step = s.child("step");
  if (!step) throw ConfigError(s.where("step") + " is required");
  c.step = parse_step(*step);
  c.preference = vec(s.get<std::vector<double>>("preference", {}));
  if (const json* ph = s.raw("phases")) {
    c.schedule.phases.clear();
    if (!ph->is_array()) throw ConfigError(s.where("phases") + " must be an array of [end, level]");
    for (const auto& p : *ph) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw ConfigError(s.where("phases") + " entries must be [end, level]");
      c.schedule.phases.push_back(Phase{p[0].get<double>(), p[1].get<double>()});
    }
  }
  c.schedule.boundary_sd = s.get<double>("boundary_sd", c.schedule.boundary_sd);
  c.schedule.level_sd = s.get<double>("level_sd", c.schedule.level_sd);
  c.theta_ahead = s.get<double>("theta_ahead", c.theta_ahead);
  c.theta_behind = s.get<double>("theta_behind", c.theta_behind);
  c.spur_boost = s.get<double>("spur_boost", c.spur_boost);
  c.block_prob = s.get<double>("block_prob", c.block_prob);
  c.spur_prob = s.get<double>("spur_prob", c.spur_prob);
  s.finish();
  return c;
}

ParamNoise parse_noise(std::optional<Section> s, ParamNoise def) {
  if (!s) return def;
  def.step_sd = s->get<double>("step_sd", def.step_sd);
  def.preference_sd = s->get<double>("preference_sd", def.preference_sd);
  def.responsiveness_sd = s->get<double>("responsiveness_sd", def.responsiveness_sd);
  s->finish();
  return def;
}

PopulationSpec parse_population(Section s) {
  PopulationSpec p;
  p.count = s.get<int>("count", p.count);
  if (auto w = s.child("weights")) {
    p.zi = w->get<double>("zi", p.zi);
    p.lw = w->get<double>("lw", p.lw);
    p.ud = w->get<double>("ud", p.ud);
    p.btf = w->get<double>("btf", p.btf);
    p.linex = w->get<double>("linex", p.linex);
    p.rp = w->get<double>("rp", p.rp);
    p.rb = w->get<double>("rb", p.rb);
    w->finish();
  }
  p.initial_balance = s.money("initial_balance", p.initial_balance);
  std::tie(p.revise_lo, p.revise_hi) = s.range("revise_interval", {p.revise_lo, p.revise_hi});
  std::tie(p.model_revise_lo, p.model_revise_hi) = s.range("model_revise_interval", {p.model_revise_lo, p.model_revise_hi});
  std::tie(p.improve_lo, p.improve_hi) = s.range("improve_after", {p.improve_lo, p.improve_hi});
  std::tie(p.shade_lo, p.shade_hi) = s.range("shade", {p.shade_lo, p.shade_hi});
  p.aggression_cap = s.get<int>("aggression_cap", p.aggression_cap);
  p.improve_cap = s.get<int>("improve_cap", p.improve_cap);
  p.max_open_orders = s.get<int>("max_open_orders", p.max_open_orders);
  p.confidence = s.get<double>("confidence", p.confidence);
  p.confidence_sd = s.get<double>("confidence_sd", p.confidence_sd);
  p.p_back = s.get<double>("p_back", p.p_back);
  const auto stake = s.range("stake", {static_cast<double>(p.stake_min) / kCentsPerUnit,
                                       static_cast<double>(p.stake_max) / kCentsPerUnit});
  p.stake_min = std::llround(stake.first * kCentsPerUnit);
  p.stake_max = std::llround(stake.second * kCentsPerUnit);
  std::tie(p.ud_gap_lo, p.ud_gap_hi) = s.range("underdog_gap", {p.ud_gap_lo, p.ud_gap_hi});
  std::tie(p.linex_window_lo, p.linex_window_hi) = s.range("linex_window", {p.linex_window_lo, p.linex_window_hi});
  const auto dr = s.range("dryruns", {p.dryruns_lo, p.dryruns_hi});
  p.dryruns_lo = static_cast<int>(dr.first);
  p.dryruns_hi = static_cast<int>(dr.second);
  p.param_noise = parse_noise(s.child("param_noise"), p.param_noise);
  p.post_noise = s.get<double>("post_noise", p.post_noise);
  std::tie(p.bias_lo, p.bias_hi) = s.range("bias", {p.bias_lo, p.bias_hi});
  s.finish();
  return p;
}

BettorSpec parse_bettor(Section s, int id) {
  BettorSpec b;
  b.id = id;
  const auto kind = s.require<std::string>("strategy");
  BeliefProfile profile;
  profile.dryruns = s.get<int>("dryruns", 100);
  profile.param_noise = parse_noise(s.child("param_noise"), {});
  profile.post_noise = s.get<double>("post_noise", 0.0);
  if (kind == "ZI") b.strategy = ZeroIntelligence{};
  else if (kind == "LW") b.strategy = LeaderWins{};
  else if (kind == "UD") b.strategy = Underdog{s.get<double>("gap", Underdog{}.gap)};
  else if (kind == "BTF") b.strategy = BackTheFavourite{};
  else if (kind == "Linex") b.strategy = Linex{s.get<double>("window", Linex{}.window)};
  else if (kind == "RP") b.strategy = RationalPredictor{profile};
  else if (kind == "RB") {
    Representative rb;
    rb.bias_strength = s.get<double>("bias", rb.bias_strength);
    rb.stake_multiples = s.get<std::vector<int>>("stake_multiples", rb.stake_multiples);
    rb.profile = profile;
    b.strategy = rb;
  } else {
    throw ConfigError(s.where("strategy") + " must be one of ZI, LW, UD, BTF, Linex, RP, RB");
  }
  b.initial_balance = s.money("initial_balance", b.initial_balance);
  b.revise_interval = s.get<double>("revise_interval", b.revise_interval);
  b.improve_after = s.get<double>("improve_after", b.improve_after);
  b.max_open_orders = s.get<int>("max_open_orders", b.max_open_orders);
  b.quote.shade = s.get<double>("shade", b.quote.shade);
  b.quote.aggression_cap = s.get<int>("aggression_cap", b.quote.aggression_cap);
  b.quote.improve_cap = s.get<int>("improve_cap", b.quote.improve_cap);
  b.confidence = s.get<double>("confidence", b.confidence);
  b.p_back = s.get<double>("p_back", b.p_back);
  const auto stake = s.range("stake", {static_cast<double>(b.stake_min) / kCentsPerUnit,
                                       static_cast<double>(b.stake_max) / kCentsPerUnit});
  b.stake_min = std::llround(stake.first * kCentsPerUnit);
  b.stake_max = std::llround(stake.second * kCentsPerUnit);
  s.finish();
  return b;
}

} // namespace

std::string config_digest(std::string_view text) {
  try {
    return sha256_hex(json::parse(text).dump());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

RunConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig out;
  out.canonical = doc.dump();
  out.digest = sha256_hex(out.canonical);

  Section root(doc, "");
  const int version = root.require<int>("schema_version");
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  SessionConfig& sc = out.session;
  sc.seed = seed.value_or(root.get<std::uint64_t>("seed", 1));

  if (auto r = root.child("race")) sc.race = parse_race(*r);

  const json* comps = root.raw("competitors");
  auto random_field = root.child("random_field");
  if (comps && random_field) throw ConfigError("give either competitors or random_field, not both");
  if (comps) {
    if (!comps->is_array()) throw ConfigError("competitors must be an array");
    for (std::size_t i = 0; i < comps->size(); ++i) {
      const int id = static_cast<int>(i);
      sc.field.push_back(parse_competitor(Section((*comps)[i], "competitors[" + std::to_string(id) + "]"), id));
    }
  } else {
    int count = 6;
    std::uint64_t field_seed = sc.seed;
    if (random_field) {
      count = random_field->get<int>("count", count);
      field_seed = random_field->get<std::uint64_t>("seed", field_seed);
      random_field->finish();
    }
    sc.field = generate_field(count, field_seed, sc.race.factors.size());
  }

  if (auto s = root.child("session")) {
    sc.pre_race_duration = s->get<double>("pre_race_duration", sc.pre_race_duration);
    sc.commission_rate = s->get<double>("commission_rate", sc.commission_rate);
    const auto mode = s->get<std::string>("matching", "crossing");
    if (mode == "crossing") sc.matching = MatchingMode::Crossing;
    else if (mode == "strict") sc.matching = MatchingMode::Strict;
    else throw ConfigError("session.matching must be \"crossing\" or \"strict\"");
    const auto belief = s->get<std::string>("belief_mode", "per_bettor");
    if (belief == "per_bettor") sc.belief_mode = BeliefMode::PerBettor;
    else if (belief == "shared") sc.belief_mode = BeliefMode::Shared;
    else throw ConfigError("session.belief_mode must be \"per_bettor\" or \"shared\"");
    sc.shared_dryruns = s->get<int>("shared_dryruns", sc.shared_dryruns);
    sc.epoch_ms = s->get<std::int64_t>("epoch_ms", sc.epoch_ms);
    s->finish();
  }

  const json* bettors = root.raw("bettors");
  std::optional<std::uint64_t> pop_seed;
  if (auto p = root.child("population")) {
    if (p->has("seed")) pop_seed = p->get<std::uint64_t>("seed", 0);
    out.population = parse_population(*p);
  }
  if (bettors) {
    if (!bettors->is_array()) throw ConfigError("bettors must be an array");
    for (std::size_t i = 0; i < bettors->size(); ++i) {
      const int id = static_cast<int>(i);
      sc.bettors.push_back(parse_bettor(Section((*bettors)[i], "bettors[" + std::to_string(id) + "]"), id));
    }
    out.explicit_bettors = true;
  } else {
    sc.bettors = generate_population(out.population, pop_seed.value_or(sc.seed));
  }

  if (auto p = root.child("probs")) {
    out.probs.at = p->get<double>("at", out.probs.at);
    out.probs.dryruns = p->get<int>("dryruns", out.probs.dryruns);
    p->finish();
  }
  if (auto b = root.child("batch")) {
    out.batch_sessions = b->get<int>("sessions", out.batch_sessions);
    b->finish();
  }
  root.finish();

  sc.validate();
  if (out.probs.dryruns < 0) throw ConfigError("probs.dryruns must be >= 0");
  if (out.batch_sessions < 1) throw ConfigError("batch.sessions must be >= 1");
  return out;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), seed);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

} // namespace bbe
