#include "beastpipe/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace beastpipe {

namespace {

LogLevel level_from_env() {
  const char* v = std::getenv("BEASTPIPE_LOG_LEVEL");
  if (!v) return LogLevel::kInfo;
  if (!std::strcmp(v, "debug")) return LogLevel::kDebug;
  if (!std::strcmp(v, "warn")) return LogLevel::kWarn;
  if (!std::strcmp(v, "error")) return LogLevel::kError;
  return LogLevel::kInfo;
}

std::atomic<LogLevel>& threshold() {
  static std::atomic<LogLevel> level{level_from_env()};
  return level;
}

const char* tag(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug:
      return "D";
    case LogLevel::kInfo:
      return "I";
    case LogLevel::kWarn:
      return "W";
    case LogLevel::kError:
      return "E";
  }
  return "?";
}

}  // namespace

void set_log_level(LogLevel level) { threshold().store(level); }

void log_line(LogLevel level, std::string_view message) {
  if (level < threshold().load(std::memory_order_relaxed)) return;
  static std::mutex mu;
  const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  std::lock_guard lock(mu);
  std::cerr << '[' << tag(level) << ' ' << now / 1000 << '.' << (now % 1000) / 100
            << (now % 100) / 10 << now % 10 << "] " << message << '\n';
}

}  // namespace beastpipe
