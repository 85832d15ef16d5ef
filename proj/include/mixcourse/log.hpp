#pragma once

namespace mixcourse {

// Verbosity is controlled by the MIXCOURSE_LOG environment variable:
// "quiet", "warn" (default), "info", or "debug". Messages go to stderr.
enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level();

void log_warn(const char *fmt, ...);
void log_info(const char *fmt, ...);
void log_debug(const char *fmt, ...);

} // namespace mixcourse
