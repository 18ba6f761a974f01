#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace cdog::log {

enum class Level { off = 0, info = 1, debug = 2 };

/// Verbosity from CDOG_LOG (off|info|debug); defaults to off.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("CDOG_LOG");
    const std::string_view v = env ? env : "off";
    if (v == "debug") return Level::debug;
    if (v == "info") return Level::info;
    return Level::off;
  }();
  return lvl;
}

inline void write(Level at, std::string_view tag, const std::string& msg) {
  if (level() < at) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[cdog " << tag << "] " << msg << '\n';
}

inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }
/// Warnings are emitted at info verbosity.
inline void warn(const std::string& msg) { write(Level::info, "warn", msg); }

}  // namespace cdog::log
