#include "evcoord/util.hpp"

#include <array>
#include <atomic>
#include <charconv>
#include <iostream>

namespace evcoord {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace log {
namespace {
std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;
}  // namespace

void set_level(Level level) { g_level = level; }

void warn(std::string_view msg) {
  if (g_level.load() < Level::kWarn) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << msg << '\n';
}

void info(std::string_view msg) {
  if (g_level.load() < Level::kInfo) return;
  std::lock_guard lock(g_mutex);
  std::cerr << msg << '\n';
}
}  // namespace log

}  // namespace evcoord
