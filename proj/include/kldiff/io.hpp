#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace kldiff {

/// CRC-64/XZ (ECMA-182 polynomial, reflected).
std::uint64_t crc64(std::string_view bytes);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t x);

/// Writes to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Throws std::runtime_error when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace kldiff
