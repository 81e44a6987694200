#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lpcaps::text {

/// Canonical tag form: ASCII-lowercased, trimmed, inner whitespace runs
/// collapsed to one space.
std::string normalize_tag(std::string_view tag);

/// Normalizes each tag, drops empties and keeps the first of any duplicates.
std::vector<std::string> normalize_tags(std::span<const std::string> tags);

std::string join(std::span<const std::string> parts, std::string_view sep);

}  // namespace lpcaps::text
