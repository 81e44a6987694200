#pragma once

#include <string>
#include <utility>

namespace lpcaps::detail {

/// "https://api.example.com/v1/" -> {"https://api.example.com", "/v1"}.
inline std::pair<std::string, std::string> split_base_url(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme = url.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string::npos) return {url, ""};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace lpcaps::detail
