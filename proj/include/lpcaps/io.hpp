#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lpcaps::io {

std::string read_file(const std::filesystem::path& path);

/// Splits into lines, stripping a trailing '\r'. A final newline does not
/// produce an empty trailing line.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::string_view data);

/// UTC timestamp in ISO-8601 form, e.g. "2024-01-01T00:00:00Z".
std::string format_utc(long long epoch_seconds);
std::string now_utc();

std::string trim(std::string_view s);

}  // namespace lpcaps::io

namespace lpcaps::io {

/// Flat "key = value" file. '#' starts a comment line; blank lines skipped.
/// Keys and values are trimmed; a value may be wrapped in double quotes.
std::vector<std::pair<std::string, std::string>> read_key_values(
    const std::filesystem::path& path);

}  // namespace lpcaps::io
