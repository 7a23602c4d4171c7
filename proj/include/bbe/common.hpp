#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bbe {

// Money is always integer minor units (cents).
using Money = std::int64_t;
using OrderId = std::int64_t;
using BettorId = int;

inline constexpr Money kCentsPerUnit = 100;

// Invalid configuration or inconsistent inputs detected before any state change.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation called in a state that does not permit it (wrong market phase, race already over, ...).
class StateError : public std::logic_error {
public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

} // namespace bbe
