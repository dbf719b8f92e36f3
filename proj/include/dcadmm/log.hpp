#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

// Minimal stderr logger, level from DCADMM_LOG={error,info,debug}.
namespace dcadmm::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level threshold() {
  static const Level lvl = [] {
    const char* env = std::getenv("DCADMM_LOG");
    if (env == nullptr) return Level::Error;
    if (std::strcmp(env, "debug") == 0) return Level::Debug;
    if (std::strcmp(env, "info") == 0) return Level::Info;
    return Level::Error;
  }();
  return lvl;
}

inline void emit(Level lvl, const char* tag, const char* fmt, std::va_list ap) {
  if (lvl > threshold()) return;
  std::fprintf(stderr, "[%s] ", tag);
  std::vfprintf(stderr, fmt, ap);
  std::fputc('\n', stderr);
}

inline void warn(const char* fmt, ...) {
  std::va_list ap;
  va_start(ap, fmt);
  emit(Level::Error, "warn", fmt, ap);
  va_end(ap);
}

inline void info(const char* fmt, ...) {
  std::va_list ap;
  va_start(ap, fmt);
  emit(Level::Info, "info", fmt, ap);
  va_end(ap);
}

inline void debug(const char* fmt, ...) {
  std::va_list ap;
  va_start(ap, fmt);
  emit(Level::Debug, "debug", fmt, ap);
  va_end(ap);
}

}  // namespace dcadmm::log
