// bbe: command-line driver for races, probability estimates, betting sessions and batches.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "bbe/config.hpp"
#include "bbe/datagen.hpp"
#include "bbe/digest.hpp"
#include "bbe/orchestrator.hpp"
#include "bbe/prediction.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace bbe;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers{1};
  std::string format{"all"};
};

OutputFormat parse_format(const std::string& f) {
  if (f == "csv") return OutputFormat::Csv;
  if (f == "jsonl") return OutputFormat::Jsonl;
  return OutputFormat::All;
}

RunConfig resolve_config(const Globals& g) {
  if (g.config.empty()) return parse_config(R"({"schema_version": 1})", g.seed);
  return load_config(g.config, g.seed);
}

fs::path out_dir(const Globals& g) {
  fs::path p = g.out;
  if (p.empty()) {
    const char* env = std::getenv("BBE_OUT");
    p = env && *env ? env : "out";
  }
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  return f;
}

void write_run_manifest(const fs::path& out, const std::string& subcommand, const RunConfig& cfg,
                        const std::vector<fs::path>& outputs) {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["config_digest"] = cfg.digest;
  j["seed"] = cfg.session.seed;
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs)
    j["outputs"].push_back({{"path", fs::relative(p, out).generic_string()}, {"sha256", sha256_file(p)}});
  auto f = open_out(out / "run_manifest.json");
  f << j.dump(2) << '\n';
  if (!f) throw std::runtime_error("failed writing run manifest");
}

int cmd_race(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  const auto& sc = cfg.session;
  sc.race.validate(sc.field);
  const RaceRecord rec = run_race(sc.race, sc.field, sc.seed);
  const fs::path out = out_dir(g);
  const fs::path traj = out / "trajectories.csv";
  const fs::path reb = out / "rebased.csv";
  {
    auto f = open_out(traj);
    write_trajectories(f, rec);
  }
  {
    auto f = open_out(reb);
    write_rebased(f, rebase(rec), rec.names);
  }
  write_run_manifest(out, "race", cfg, {traj, reb});
  std::printf("winner %s, finish order:", rec.names[static_cast<std::size_t>(rec.finish_order.front())].c_str());
  for (int c : rec.finish_order) std::printf(" %s", rec.names[static_cast<std::size_t>(c)].c_str());
  std::printf("\n");
  return 0;
}

int cmd_probs(const Globals& g, std::optional<double> at, std::optional<int> dryruns) {
  RunConfig cfg = resolve_config(g);
  if (at) cfg.probs.at = *at;
  if (dryruns) cfg.probs.dryruns = *dryruns;
  if (cfg.probs.dryruns < 0) throw ConfigError("--dryruns must be >= 0");
  const auto& sc = cfg.session;
  sc.race.validate(sc.field);

  auto streams = RaceStreams::derive(sc.seed, sc.race.race_id, sc.field);
  RaceState state = start_race(sc.race, sc.field, streams);
  while (!state.over() && state.t < cfg.probs.at - 1e-9) advance_tick(state, sc.race, sc.field, streams);

  Rng rng = make_rng(derive_seed(sc.seed, "probs"));
  const ProbEstimate est = estimate_probs(state, sc.race, sc.field, BeliefProfile{cfg.probs.dryruns, {}, 0.0}, rng);

  const fs::path out = out_dir(g);
  const fs::path path = out / "probs.csv";
  auto f = open_out(path);
  f << "competitor,name,position,probability,fair_odds\n";
  std::printf("snapshot t=%.3f, %d dry-runs\n", state.t, est.n_samples);
  for (std::size_t c = 0; c < sc.field.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%s,%.3f,%.6f,%.2f", c, sc.field[c].name.c_str(), state.positions(ci),
                  est.probs(ci), fair_decimal_odds(est.probs(ci)));
    f << line << '\n';
    std::printf("  %-12s d=%9.3f  p=%.4f  odds=%.2f\n", sc.field[c].name.c_str(), state.positions(ci), est.probs(ci),
                fair_decimal_odds(est.probs(ci)));
  }
  f.close();
  write_run_manifest(out, "probs", cfg, {path});
  return 0;
}

int cmd_session(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  const SessionRecord rec = run_session(cfg.session);
  const fs::path out = out_dir(g);
  const auto files = write_session(rec, out, parse_format(g.format));
  write_run_manifest(out, "session", cfg, files);
  std::size_t matched = 0;
  for (const auto& e : rec.journal) matched += e.kind == EventKind::Match;
  std::printf("winner %s; %zu matched bets; commission %s\n",
              rec.race.names[static_cast<std::size_t>(rec.winner())].c_str(), matched,
              format_cents(rec.commission_pot).c_str());
  return 0;
}

int cmd_batch(const Globals& g, std::optional<int> sessions) {
  const RunConfig cfg = resolve_config(g);
  const int m = sessions.value_or(cfg.batch_sessions);
  const fs::path out = out_dir(g);
  const OutputFormat format = parse_format(g.format);
  const auto entries = run_batch(cfg.session, m, g.workers, out,
                                 [format](const SessionRecord& r, const fs::path& dir) { return write_session(r, dir, format); });
  write_run_manifest(out, "batch", cfg, {out / "manifest.jsonl"});
  int failed = 0;
  for (const auto& e : entries) {
    if (!e.ok) {
      ++failed;
      std::fprintf(stderr, "session %d failed: %s\n", e.index, e.error.c_str());
    }
  }
  std::printf("%d sessions, %d failed\n", m, failed);
  return failed == 0 ? 0 : 1;
}

int cmd_liquidity(int runners, const std::vector<int>& depths) {
  if (runners < 1) throw ConfigError("--runners must be >= 1");
  std::printf("runners %d\n", runners);
  std::printf("nonempty market probability N!/N^N = %.6g\n", nonempty_market_prob(runners));
  std::printf("%6s %12s\n", "depth", "min_bettors");
  for (int d : depths) {
    if (d < 1) throw ConfigError("--depth values must be >= 1");
    std::printf("%6d %12lld\n", d, static_cast<long long>(min_bettors(runners, d)));
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Betting-exchange simulator: races, win-probability estimates, sessions and synthetic datasets"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (default: $BBE_OUT, else ./out)");
  app.add_option("--workers", g.workers, "Worker threads for batch runs")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Session output format")->check(CLI::IsMember({"csv", "jsonl", "all"}));

  auto* race = app.add_subcommand("race", "Run one race; write trajectories and the rebased projection");

  std::optional<double> at;
  std::optional<int> dryruns;
  auto* probs = app.add_subcommand("probs", "Estimate win probabilities at a race snapshot");
  probs->add_option("--at", at, "Snapshot time in race seconds");
  probs->add_option("--dryruns", dryruns, "Number of dry-run continuations");

  auto* session = app.add_subcommand("session", "Run one betting session and write all artifacts");

  std::optional<int> sessions;
  auto* batch = app.add_subcommand("batch", "Run independent sessions into per-session directories");
  batch->add_option("-M,--sessions", sessions, "Number of sessions")->check(CLI::PositiveNumber);

  int runners = 0;
  std::vector<int> depths{1, 2, 3, 5, 10};
  auto* liquidity = app.add_subcommand("liquidity", "Liquidity arithmetic for a field size");
  liquidity->add_option("--runners", runners, "Number of runners")->required();
  liquidity->add_option("--depth", depths, "Grid depths for the min-bettor table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (race->parsed()) return cmd_race(g);
    if (probs->parsed()) return cmd_probs(g, at, dryruns);
    if (session->parsed()) return cmd_session(g);
    if (batch->parsed()) return cmd_batch(g, sessions);
    if (liquidity->parsed()) return cmd_liquidity(runners, depths);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
