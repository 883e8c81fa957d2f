#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace biov {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's contents. Throws IoError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Whole-file read / write helpers that throw IoError naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace biov
