#include "graphprompt/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace gprompt {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::warning)};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warning(const std::string& message) {
  if (g_level < static_cast<int>(LogLevel::warning)) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[warn] " << message << '\n';
}

void log_info(const std::string& message) {
  if (g_level < static_cast<int>(LogLevel::info)) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[info] " << message << '\n';
}

}  // namespace gprompt
