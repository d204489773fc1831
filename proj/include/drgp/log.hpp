#ifndef DRGP_LOG_HPP
#define DRGP_LOG_HPP

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace drgp {

enum class LogLevel { Debug = 0, Info = 1, Warning = 2, Silent = 3 };

namespace detail {
inline std::atomic<int> &log_threshold() {
  static std::atomic<int> level{static_cast<int>(LogLevel::Warning)};
  return level;
}
inline std::mutex &log_mutex() {
  static std::mutex m;
  return m;
}
} // namespace detail

inline void set_log_level(LogLevel level) {
  detail::log_threshold().store(static_cast<int>(level));
}

inline bool log_enabled(LogLevel level) {
  return static_cast<int>(level) >= detail::log_threshold().load();
}

// Diagnostics go to stderr only, so primary output files stay byte-stable.
inline void log(LogLevel level, std::string_view message) {
  if (!log_enabled(level) || level == LogLevel::Silent) {
    return;
  }
  static constexpr const char *names[] = {"debug", "info", "warning"};
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::clog << "[drgp " << names[static_cast<int>(level)] << "] " << message
            << '\n';
}

} // namespace drgp

#endif // DRGP_LOG_HPP
