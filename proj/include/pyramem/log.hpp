#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace pyramem::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {

struct State {
  std::mutex mutex;
  Sink sink;
  Level threshold = Level::warn;
};

inline State& state() {
  static State s;
  return s;
}

inline const char* label(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "?";
}

}  // namespace detail

// Replaces the process-wide sink; returns the previous one. An empty sink
// restores the default stderr writer.
inline Sink set_sink(Sink sink) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  std::swap(s.sink, sink);
  return sink;
}

inline void set_threshold(Level level) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  s.threshold = level;
}

inline void write(Level level, std::string_view message) {
  auto& s = detail::state();
  std::lock_guard lock(s.mutex);
  if (s.sink) {
    s.sink(level, message);
    return;
  }
  if (level < s.threshold) return;
  std::cerr << "[pyramem " << detail::label(level) << "] " << message << '\n';
}

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

}  // namespace pyramem::log
