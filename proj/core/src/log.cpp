#include "mbbsim/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mbbsim {

namespace {

LogLevel parse_level(const char* s) {
  if (s == nullptr) return LogLevel::warn;
  std::string v(s);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  if (v == "warn") return LogLevel::warn;
  if (v == "error") return LogLevel::error;
  if (v == "off" || v == "none") return LogLevel::off;
  return LogLevel::warn;
}

LogLevel g_threshold = parse_level(std::getenv("MBBSIM_LOG"));
std::mutex g_mutex;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    default: return "?";
  }
}

}  // namespace

LogLevel log_threshold() { return g_threshold; }

void set_log_threshold(LogLevel level) { g_threshold = level; }

void log_message(LogLevel level, const std::string& message) {
  if (level < g_threshold) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[mbbsim " << level_tag(level) << "] " << message << "\n";
}

}  // namespace mbbsim
