#pragma once

#include <charconv>
#include <string>

namespace dbarlab {

/// Shortest round-trip decimal representation; locale independent so CSV
/// bodies are byte-stable.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

} // namespace dbarlab
