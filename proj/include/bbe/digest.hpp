#pragma once
#include <filesystem>
#include <string>
#include <string_view>

namespace bbe {

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Lower-case hex SHA-256 of a file's bytes. Throws std::runtime_error if it cannot be read.
std::string sha256_file(const std::filesystem::path& path);

} // namespace bbe
