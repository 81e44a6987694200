#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

namespace {

bool is_apostrophe_at(std::string_view text, std::size_t i, std::size_t& width) {
  if (text[i] == '\'') {
    width = 1;
    return true;
  }
  // U+2019 RIGHT SINGLE QUOTATION MARK, the typographic apostrophe.
  if (text.substr(i, 3) == "\xE2\x80\x99") {
    width = 3;
    return true;
  }
  return false;
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  for (std::size_t i = 0; i < text.size();) {
    std::size_t width = 0;
    if (is_apostrophe_at(text, i, width)) {
      i += width;
      continue;
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      current.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    ++i;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace lpcaps::metrics
