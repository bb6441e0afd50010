#pragma once

// Shared helpers for the remote clients. Private to the library.

#include <string>
#include <utility>

#include "kgfr/error.hpp"

namespace kgfr::detail {

// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL '" + url + "' has no scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string join_path(std::string base, const std::string& suffix) {
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + suffix;
}

}  // namespace kgfr::detail
