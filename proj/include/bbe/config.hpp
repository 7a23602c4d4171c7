#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "bbe/orchestrator.hpp"

namespace bbe {

inline constexpr int kSchemaVersion = 1;

struct ProbsOptions {
  double at{60.0};  // race seconds of the snapshot
  int dryruns{1000};
};

/// Everything a run needs, resolved from one JSON document. Unknown keys are errors.
struct RunConfig {
  SessionConfig session;
  PopulationSpec population;
  bool explicit_bettors{false};
  ProbsOptions probs;
  int batch_sessions{10};
  std::string canonical;  // input re-serialized with sorted keys and no whitespace
  std::string digest;     // SHA-256 of `canonical`
};

/// Throws ConfigError on malformed JSON, a wrong schema_version, unknown keys or invalid values.
/// `seed` replaces the document's master seed.
RunConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed = std::nullopt);

/// Reads and parses a file; a missing or unreadable file is a ConfigError naming the path.
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);

/// Digest of a config text, stable under key reordering and whitespace changes.
std::string config_digest(std::string_view text);

} // namespace bbe
