#pragma once

#include <sstream>
#include <string>

namespace mbbsim {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

/// Threshold comes from the MBBSIM_LOG environment variable
/// (debug|info|warn|error|off); default warn.
LogLevel log_threshold();
void set_log_threshold(LogLevel level);
void log_message(LogLevel level, const std::string& message);

namespace detail {
template <typename... Args>
void log_fmt(LogLevel level, Args&&... args) {
  if (level < log_threshold()) return;
  std::ostringstream os;
  (os << ... << args);
  log_message(level, os.str());
}
}  // namespace detail

#define MBBSIM_LOG_DEBUG(...) ::mbbsim::detail::log_fmt(::mbbsim::LogLevel::debug, __VA_ARGS__)
#define MBBSIM_LOG_INFO(...) ::mbbsim::detail::log_fmt(::mbbsim::LogLevel::info, __VA_ARGS__)
#define MBBSIM_LOG_WARN(...) ::mbbsim::detail::log_fmt(::mbbsim::LogLevel::warn, __VA_ARGS__)
#define MBBSIM_LOG_ERROR(...) ::mbbsim::detail::log_fmt(::mbbsim::LogLevel::error, __VA_ARGS__)

}  // namespace mbbsim
