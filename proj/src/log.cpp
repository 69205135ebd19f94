#include "tarpro/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace tarpro {
namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarn};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warn(std::string_view msg) {
  if (g_level < LogLevel::kWarn) return;
  std::lock_guard lock(g_mu);
  std::cerr << "warning: " << msg << '\n';
}

void log_info(std::string_view msg) {
  if (g_level < LogLevel::kInfo) return;
  std::lock_guard lock(g_mu);
  std::cerr << msg << '\n';
}

}  // namespace tarpro
