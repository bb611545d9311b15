#ifndef BEASTPIPE_LOG_HPP_
#define BEASTPIPE_LOG_HPP_

#include <string_view>

namespace beastpipe {

enum class LogLevel { kDebug, kInfo, kWarn, kError };

// Thread-safe line logging to stderr. Messages below the threshold are
// discarded; the default threshold is kInfo, or BEASTPIPE_LOG_LEVEL
// (debug|info|warn|error) when set.
void log_line(LogLevel level, std::string_view message);
void set_log_level(LogLevel level);

inline void log_info(std::string_view m) { log_line(LogLevel::kInfo, m); }
inline void log_warn(std::string_view m) { log_line(LogLevel::kWarn, m); }
inline void log_error(std::string_view m) { log_line(LogLevel::kError, m); }
inline void log_debug(std::string_view m) { log_line(LogLevel::kDebug, m); }

}  // namespace beastpipe

#endif  // BEASTPIPE_LOG_HPP_
