#include "mixcourse/log.hpp"

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mixcourse {

LogLevel log_level() {
    static LogLevel lvl = [] {
        const char *env = std::getenv("MIXCOURSE_LOG");
        if (!env) return LogLevel::warn;
        if (std::strcmp(env, "quiet") == 0) return LogLevel::quiet;
        if (std::strcmp(env, "info") == 0) return LogLevel::info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
        return LogLevel::warn;
    }();
    return lvl;
}

static void vlog(const char *tag, const char *fmt, va_list ap) {
    std::fprintf(stderr, "[mixcourse %s] ", tag);
    std::vfprintf(stderr, fmt, ap);
    std::fputc('\n', stderr);
}

void log_warn(const char *fmt, ...) {
    if (log_level() < LogLevel::warn) return;
    va_list ap;
    va_start(ap, fmt);
    vlog("warn", fmt, ap);
    va_end(ap);
}

void log_info(const char *fmt, ...) {
    if (log_level() < LogLevel::info) return;
    va_list ap;
    va_start(ap, fmt);
    vlog("info", fmt, ap);
    va_end(ap);
}

void log_debug(const char *fmt, ...) {
    if (log_level() < LogLevel::debug) return;
    va_list ap;
    va_start(ap, fmt);
    vlog("debug", fmt, ap);
    va_end(ap);
}

} // namespace mixcourse
