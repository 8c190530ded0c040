#pragma once

#include <functional>
#include <string_view>

namespace driftrank {

enum class LogLevel { Debug, Info, Warning, Error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Default sink writes warnings and errors to stderr. Returns the previous sink.
LogSink set_log_sink(LogSink sink);

void log(LogLevel level, std::string_view message);

inline void log_warning(std::string_view message) { log(LogLevel::Warning, message); }
inline void log_info(std::string_view message) { log(LogLevel::Info, message); }

} // namespace driftrank
