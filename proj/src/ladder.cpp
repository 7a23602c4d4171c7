#include "bbe/ladder.hpp"

#include <algorithm>
#include <cmath>

namespace bbe {
namespace {

struct Band {
  int lo;    // exclusive lower bound (hundredths)
  int hi;    // inclusive upper bound
  int step;
};

constexpr std::array<Band, 10> kBands{{
    {100, 200, 1},
    {200, 300, 2},
    {300, 400, 5},
    {400, 600, 10},
    {600, 1000, 20},
    {1000, 2000, 50},
    {2000, 3000, 100},
    {3000, 5000, 200},
    {5000, 10000, 500},
    {10000, 100000, 1000},
}};

constexpr std::array<int, kLadderSize> build_ladder() {
  std::array<int, kLadderSize> out{};
  int i = 0;
  for (const auto& b : kBands) {
    for (int v = b.lo + b.step; v <= b.hi; v += b.step) out[i++] = v;
  }
  return out;
}

constexpr std::array<int, kLadderSize> kLadder = build_ladder();
static_assert(kLadder.front() == 101);
static_assert(kLadder.back() == 100000);
static_assert(kLadder[kLadderSize - 2] == 99000);

} // namespace

int OddsTick::centi() const noexcept { return kLadder[static_cast<std::size_t>(index)]; }

std::optional<OddsTick> tick_from_centi(int centi) noexcept {
  auto it = std::lower_bound(kLadder.begin(), kLadder.end(), centi);
  if (it == kLadder.end() || *it != centi) return std::nullopt;
  return OddsTick{static_cast<int>(it - kLadder.begin())};
}

std::optional<OddsTick> tick_from_odds(double odds) noexcept {
  if (!std::isfinite(odds)) return std::nullopt;
  return tick_from_centi(static_cast<int>(std::llround(odds * 100.0)));
}

OddsTick ceil_tick(double odds) noexcept {
  if (!(odds > kMinOdds)) return kMinTick;
  if (odds >= kMaxOdds) return kMaxTick;
  const double c = odds * 100.0;
  auto it = std::lower_bound(kLadder.begin(), kLadder.end(), c - 1e-9,
                             [](int v, double x) { return v < x; });
  return OddsTick{static_cast<int>(it - kLadder.begin())};
}

OddsTick floor_tick(double odds) noexcept {
  if (!(odds < kMaxOdds)) return kMaxTick;
  if (odds <= kMinOdds) return kMinTick;
  const double c = odds * 100.0;
  auto it = std::upper_bound(kLadder.begin(), kLadder.end(), c + 1e-9,
                             [](double x, int v) { return x < v; });
  return OddsTick{static_cast<int>(it - kLadder.begin()) - 1};
}

OddsTick nearest_tick(double odds) noexcept {
  const OddsTick lo = floor_tick(odds);
  const OddsTick hi = ceil_tick(odds);
  if (lo == hi) return lo;
  const double c = std::clamp(odds, kMinOdds, kMaxOdds) * 100.0;
  return (c - lo.centi() <= hi.centi() - c) ? lo : hi;
}

OddsTick offset_tick(OddsTick t, int steps) noexcept {
  return OddsTick{std::clamp(t.index + steps, 0, kLadderSize - 1)};
}

} // namespace bbe
