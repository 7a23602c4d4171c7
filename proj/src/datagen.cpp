#include "bbe/datagen.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bbe {
namespace {

using ojson = nlohmann::ordered_json;

std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

std::string odds_text(const std::optional<OddsTick>& t) { return t ? fixed(t->value(), 2) : std::string{}; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double odds_json(int centi) { return static_cast<double>(centi) / 100.0; }

int centi_from_json(const nlohmann::json& v) { return static_cast<int>(std::llround(v.get<double>() * 100.0)); }

ojson market_definition(MarketPhase phase) {
  ojson d;
  d["status"] = phase == MarketPhase::Closed ? "CLOSED" : "OPEN";
  d["inPlay"] = phase != MarketPhase::PreRace;
  return d;
}

void check_stream(const std::ostream& os, const std::filesystem::path& p) {
  if (!os) throw std::runtime_error("failed writing " + p.string());
}

} // namespace

std::string format_cents(Money cents) {
  const bool neg = cents < 0;
  const std::uint64_t a = neg ? static_cast<std::uint64_t>(-(cents + 1)) + 1 : static_cast<std::uint64_t>(cents);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%" PRIu64 ".%02" PRIu64, neg ? "-" : "", a / 100, a % 100);
  return buf;
}

// ---------------------------------------------------------------------------
// Trajectories

void write_trajectories(std::ostream& os, const RaceRecord& rec) {
  os << 't';
  for (const auto& n : rec.names) os << ',' << n;
  os << '\n';
  for (Eigen::Index r = 0; r < rec.positions.rows(); ++r) {
    os << fixed(rec.times(r), 3);
    for (Eigen::Index c = 0; c < rec.positions.cols(); ++c) os << ',' << fixed(rec.positions(r, c), 3);
    os << '\n';
  }
}

RaceRecord read_trajectories(std::istream& is) {
  RaceRecord rec;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty trajectory file");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "t") throw std::runtime_error("trajectory header must start with 't'");
  rec.names.assign(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(rec.names.size());

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1) throw std::runtime_error("trajectory row has wrong width");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  rec.times.resize(static_cast<Eigen::Index>(rows.size()));
  rec.positions.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    rec.times(ri) = rows[r][0];
    for (Eigen::Index c = 0; c < n; ++c) rec.positions(ri, c) = rows[r][static_cast<std::size_t>(c + 1)];
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Rebasing

Eigen::MatrixXd RebasedSeries::restore() const {
  Eigen::MatrixXd out = residuals;
  const Eigen::VectorXd fit = (intercept + slope * times.array()).matrix();
  out.colwise() += fit;
  return out;
}

RebasedSeries rebase(const RaceRecord& rec) {
  const Eigen::Index T = rec.positions.rows();
  const Eigen::Index n = rec.positions.cols();
  if (T < 2 || n < 1 || rec.times.size() != T || !(rec.times.maxCoeff() > rec.times.minCoeff()))
    throw std::invalid_argument("rebasing needs at least two distinct times");

  Eigen::MatrixXd X(T * n, 2);
  Eigen::VectorXd y(T * n);
  for (Eigen::Index c = 0; c < n; ++c) {
    X.block(c * T, 0, T, 1).setOnes();
    X.block(c * T, 1, T, 1) = rec.times;
    y.segment(c * T, T) = rec.positions.col(c);
  }
  const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(y);

  RebasedSeries s;
  s.intercept = beta(0);
  s.slope = beta(1);
  s.times = rec.times;
  s.residuals = rec.positions;
  s.residuals.colwise() -= (beta(0) + beta(1) * rec.times.array()).matrix();
  return s;
}

void write_rebased(std::ostream& os, const RebasedSeries& s, std::span<const std::string> names) {
  if (static_cast<Eigen::Index>(names.size()) != s.residuals.cols())
    throw std::invalid_argument("name count does not match rebased series");
  os << "# fit: d = " << fixed(s.intercept, 6) << " + " << fixed(s.slope, 6) << " * t\n";
  os << 't';
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (Eigen::Index r = 0; r < s.residuals.rows(); ++r) {
    os << fixed(s.times(r), 3);
    for (Eigen::Index c = 0; c < s.residuals.cols(); ++c) os << ',' << fixed(s.residuals(r, c), 3);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Market-change stream

void write_market_stream(std::ostream& os, const std::vector<JournalEntry>& journal, const StreamMeta& meta) {
  {
    ojson def = market_definition(MarketPhase::PreRace);
    def["runners"] = ojson::array();
    for (std::size_t i = 0; i < meta.runner_names.size(); ++i)
      def["runners"].push_back({{"id", i}, {"name", meta.runner_names[i]}});
    ojson mc = {{"id", meta.market_id}, {"img", true}, {"marketDefinition", def}};
    ojson msg = {{"op", "mcm"}, {"pt", meta.epoch_ms}, {"mc", ojson::array({mc})}};
    os << msg.dump() << '\n';
  }

  std::map<std::pair<int, int>, Money> traded;
  std::size_t i = 0;
  while (i < journal.size()) {
    const std::int64_t ms = journal[i].time_ms;
    // (competitor) -> side -> centi -> size, last write wins within the batch
    std::map<int, std::map<int, std::map<int, Money>>> cells;
    std::map<int, std::map<int, Money>> trades;
    std::optional<ojson> def;
    for (; i < journal.size() && journal[i].time_ms == ms; ++i) {
      const auto& e = journal[i];
      for (const auto& cc : e.cells) cells[cc.competitor][static_cast<int>(cc.side)][cc.odds.centi()] = cc.size;
      if (e.kind == EventKind::Match) {
        const auto key = std::make_pair(e.match.competitor, e.match.odds.centi());
        traded[key] += e.match.stake;
        trades[key.first][key.second] = traded[key];
      } else if (e.kind == EventKind::Phase) {
        def = market_definition(e.phase);
      } else if (e.kind == EventKind::Settle) {
        def = market_definition(MarketPhase::Closed);
        (*def)["winner"] = e.winner;
      }
    }
    if (cells.empty() && trades.empty() && !def) continue;

    std::map<int, ojson> runners;
    auto runner = [&](int c) -> ojson& {
      auto it = runners.find(c);
      if (it == runners.end()) it = runners.emplace(c, ojson{{"id", c}}).first;
      return it->second;
    };
    for (const auto& [c, sides] : cells) {
      for (const auto& [side, ladder] : sides) {
        ojson arr = ojson::array();
        for (const auto& [centi, size] : ladder) arr.push_back({odds_json(centi), size});
        runner(c)[side == static_cast<int>(Side::Back) ? "back" : "lay"] = arr;
      }
    }
    for (const auto& [c, ladder] : trades) {
      ojson arr = ojson::array();
      for (const auto& [centi, vol] : ladder) arr.push_back({odds_json(centi), vol});
      runner(c)["trd"] = arr;
    }
    ojson mc = {{"id", meta.market_id}};
    if (!runners.empty()) {
      mc["rc"] = ojson::array();
      for (auto& [c, r] : runners) mc["rc"].push_back(std::move(r));
    }
    if (def) mc["marketDefinition"] = *def;
    ojson msg = {{"op", "mcm"}, {"pt", meta.epoch_ms + ms}, {"mc", ojson::array({mc})}};
    os << msg.dump() << '\n';
  }
}

StreamBook replay_market_stream(std::istream& is, const std::function<void(const StreamBook&)>& on_message) {
  StreamBook book;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("malformed stream line: ") + e.what());
    }
    if (msg.value("op", "") != "mcm") throw std::runtime_error("stream message is not an mcm");
    const auto pt = msg.at("pt").get<std::int64_t>();
    if (!first && pt < book.last_pt) throw std::runtime_error("stream pt decreased");
    first = false;
    book.last_pt = pt;
    for (const auto& mc : msg.at("mc")) {
      book.market_id = mc.at("id").get<std::string>();
      if (auto d = mc.find("marketDefinition"); d != mc.end()) {
        if (auto r = d->find("runners"); r != d->end()) {
          book.runner_names.clear();
          for (const auto& x : *r) book.runner_names.push_back(x.at("name").get<std::string>());
        }
        const bool closed = d->at("status").get<std::string>() == "CLOSED";
        const bool in_play = d->at("inPlay").get<bool>();
        book.phase = closed ? MarketPhase::Closed : in_play ? MarketPhase::InPlay : MarketPhase::PreRace;
        if (auto w = d->find("winner"); w != d->end()) book.winner = w->get<int>();
      }
      if (auto rc = mc.find("rc"); rc != mc.end()) {
        for (const auto& r : *rc) {
          const int c = r.at("id").get<int>();
          for (const auto& [key, side] : {std::pair{"back", Side::Back}, std::pair{"lay", Side::Lay}}) {
            if (auto arr = r.find(key); arr != r.end()) {
              for (const auto& cell : *arr) {
                const auto k = std::make_tuple(c, side, centi_from_json(cell.at(0)));
                const auto size = cell.at(1).get<Money>();
                if (size == 0) book.cells.erase(k);
                else book.cells[k] = size;
              }
            }
          }
          if (auto arr = r.find("trd"); arr != r.end())
            for (const auto& cell : *arr) book.traded[{c, centi_from_json(cell.at(0))}] = cell.at(1).get<Money>();
        }
      }
    }
    ++book.messages;
    if (on_message) on_message(book);
  }
  return book;
}

std::map<std::tuple<int, Side, int>, Money> book_cells(const Exchange& ex) {
  std::map<std::tuple<int, Side, int>, Money> out;
  for (int c = 0; c < ex.competitors(); ++c) {
    for (const auto& cell : ladder_view(ex, c)) {
      if (cell.back > 0) out[{c, Side::Back, cell.odds.centi()}] = cell.back;
      if (cell.lay > 0) out[{c, Side::Lay, cell.odds.centi()}] = cell.lay;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tabular series

void write_market_series(std::ostream& os, const SessionRecord& rec) {
  os << "t,phase";
  for (const auto& n : rec.race.names)
    os << ',' << n << "_back," << n << "_back_size," << n << "_lay," << n << "_lay_size," << n << "_ltp," << n
       << "_traded";
  os << '\n';
  for (const auto& m : rec.market) {
    os << fixed(m.t, 3) << ',' << to_string(m.phase);
    for (const auto& q : m.quotes) {
      os << ',' << odds_text(q.best_back) << ',' << format_cents(q.back_size) << ',' << odds_text(q.best_lay) << ','
         << format_cents(q.lay_size) << ',' << odds_text(q.last_traded) << ',' << format_cents(q.traded);
    }
    os << '\n';
  }
}

void write_sentiment(std::ostream& os, std::span<const BeliefSample> samples, std::span<const std::string> names,
                     std::optional<BettorId> bettor) {
  if (!bettor) os << "bettor,";
  os << 't';
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& s : samples) {
    if (bettor && s.bettor != *bettor) continue;
    if (static_cast<std::size_t>(s.probs.size()) != names.size())
      throw std::invalid_argument("belief sample width does not match the field");
    if (!bettor) os << s.bettor << ',';
    os << fixed(s.t, 3);
    for (Eigen::Index c = 0; c < s.probs.size(); ++c) os << ',' << fixed(100.0 * s.probs(c), 2);
    os << '\n';
  }
}

void write_accounts(std::ostream& os, const SessionRecord& rec) {
  os << "bettor,strategy,initial,balance,escrow,pnl\n";
  for (std::size_t i = 0; i < rec.final_accounts.size(); ++i) {
    const auto& a = rec.final_accounts[i];
    os << a.bettor << ',' << rec.bettor_strategies.at(i) << ',' << format_cents(rec.initial_accounts.at(i).balance)
       << ',' << format_cents(a.balance) << ',' << format_cents(a.escrow) << ',' << format_cents(rec.pnl.at(i)) << '\n';
  }
}

void write_journal(std::ostream& os, const std::vector<JournalEntry>& journal) {
  for (const auto& e : journal) {
    ojson j;
    j["seq"] = e.seq;
    j["time_ms"] = e.time_ms;
    switch (e.kind) {
      case EventKind::Submit:
        j["kind"] = "submit";
        j["bettor"] = e.request.bettor;
        j["competitor"] = e.request.competitor;
        j["side"] = to_string(e.request.side);
        j["odds"] = odds_json(e.request.odds.centi());
        j["stake"] = e.request.stake;
        j["order"] = e.order_id;
        if (e.reject != RejectReason::None) j["reject"] = to_string(e.reject);
        break;
      case EventKind::Match:
        j["kind"] = "match";
        j["back_order"] = e.match.back_order;
        j["lay_order"] = e.match.lay_order;
        j["backer"] = e.match.backer;
        j["layer"] = e.match.layer;
        j["competitor"] = e.match.competitor;
        j["odds"] = odds_json(e.match.odds.centi());
        j["stake"] = e.match.stake;
        break;
      case EventKind::Cancel:
        j["kind"] = "cancel";
        j["order"] = e.order_id;
        j["amount"] = e.amount;
        j["reason"] = to_string(e.cancel_reason);
        break;
      case EventKind::Phase:
        j["kind"] = "phase";
        j["phase"] = to_string(e.phase);
        break;
      case EventKind::Settle:
        j["kind"] = "settle";
        j["winner"] = e.winner;
        j["commission_bps"] = e.commission_bps;
        break;
    }
    if (!e.cells.empty()) {
      j["cells"] = ojson::array();
      for (const auto& c : e.cells)
        j["cells"].push_back({c.competitor, to_string(c.side), odds_json(c.odds.centi()), c.size});
    }
    os << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Session bundle

std::vector<std::filesystem::path> write_session(const SessionRecord& rec, const std::filesystem::path& dir,
                                                 OutputFormat format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> out;
  auto emit = [&](const char* name, auto&& body) {
    const fs::path p = dir / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    body(f);
    f.flush();
    check_stream(f, p);
    out.push_back(p);
  };

  if (format != OutputFormat::Jsonl) {
    emit("trajectories.csv", [&](std::ostream& os) { write_trajectories(os, rec.race); });
    emit("rebased.csv", [&](std::ostream& os) { write_rebased(os, rebase(rec.race), rec.race.names); });
    emit("market.csv", [&](std::ostream& os) { write_market_series(os, rec); });
    emit("sentiment.csv", [&](std::ostream& os) { write_sentiment(os, rec.beliefs, rec.race.names); });
    emit("accounts.csv", [&](std::ostream& os) { write_accounts(os, rec); });
  }
  if (format != OutputFormat::Csv) {
    const StreamMeta meta{rec.race.race_id, rec.race.names, rec.epoch_ms};
    emit("stream.jsonl", [&](std::ostream& os) { write_market_stream(os, rec.journal, meta); });
    emit("journal.jsonl", [&](std::ostream& os) { write_journal(os, rec.journal); });
  }
  emit("summary.json", [&](std::ostream& os) {
    ojson j;
    j["seed"] = rec.seed;
    j["race_id"] = rec.race.race_id;
    j["winner"] = rec.winner();
    j["winner_name"] = rec.race.names.at(static_cast<std::size_t>(rec.winner()));
    j["finish_order"] = rec.race.finish_order;
    j["finish_times"] = rec.race.finish_times;
    j["betting_closed_at"] = rec.betting_closed_at;
    j["bettors"] = rec.final_accounts.size();
    j["orders"] = std::count_if(rec.journal.begin(), rec.journal.end(),
                                [](const JournalEntry& e) { return e.kind == EventKind::Submit && e.order_id > 0; });
    j["matched_bets"] = std::count_if(rec.journal.begin(), rec.journal.end(),
                                      [](const JournalEntry& e) { return e.kind == EventKind::Match; });
    j["commission_cents"] = rec.commission_pot;
    j["btf_fallbacks"] = rec.btf_fallbacks;
    os << j.dump(2) << '\n';
  });
  return out;
}

} // namespace bbe
