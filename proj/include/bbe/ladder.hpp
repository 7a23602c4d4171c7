#pragma once
#include <array>
#include <compare>
#include <cstdint>
#include <optional>

namespace bbe {

// Banded decimal-odds ladder from 1.01 to 1000. Values are held exactly as hundredths.
//   1.01-2 by 0.01, 2-3 by 0.02, 3-4 by 0.05, 4-6 by 0.1, 6-10 by 0.2,
//   10-20 by 0.5, 20-30 by 1, 30-50 by 2, 50-100 by 5, 100-1000 by 10
inline constexpr int kLadderSize = 350;

struct OddsTick {
  int index{0};

  /// Odds in hundredths, e.g. 2.5 -> 250.
  int centi() const noexcept;
  double value() const noexcept { return centi() / 100.0; }

  auto operator<=>(const OddsTick&) const = default;
};

inline constexpr OddsTick kMinTick{0};
inline constexpr OddsTick kMaxTick{kLadderSize - 1};
inline constexpr double kMinOdds = 1.01;
inline constexpr double kMaxOdds = 1000.0;

/// Exact lookup; absent when the value (in hundredths) is not on the ladder.
std::optional<OddsTick> tick_from_centi(int centi) noexcept;
/// Exact lookup from decimal odds (rounded to hundredths first).
std::optional<OddsTick> tick_from_odds(double odds) noexcept;

/// Closest ladder tick to arbitrary odds (clamped into [1.01, 1000]); ties resolve to the lower tick.
OddsTick nearest_tick(double odds) noexcept;
/// Highest tick with value <= odds (kMinTick below the ladder).
OddsTick floor_tick(double odds) noexcept;
/// Lowest tick with value >= odds (kMaxTick above the ladder).
OddsTick ceil_tick(double odds) noexcept;

/// Tick moved by `steps` positions, saturating at the ladder ends.
OddsTick offset_tick(OddsTick t, int steps) noexcept;

} // namespace bbe
