#include "lpcaps/text.hpp"

#include <unordered_set>

namespace lpcaps::text {

std::string normalize_tag(std::string_view tag) {
  std::string out;
  out.reserve(tag.size());
  bool pending_space = false;
  for (char ch : tag) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  return out;
}

std::vector<std::string> normalize_tags(std::span<const std::string> tags) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& t : tags) {
    auto n = normalize_tag(t);
    if (n.empty() || !seen.insert(n).second) continue;
    out.push_back(std::move(n));
  }
  return out;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace lpcaps::text
