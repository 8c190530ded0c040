#include "driftrank/log.hpp"

#include <iostream>
#include <mutex>

namespace driftrank {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& current_sink() {
    static LogSink sink = [](LogLevel level, std::string_view message) {
        if (level < LogLevel::Warning) {
            return;
        }
        std::cerr << (level == LogLevel::Error ? "error: " : "warning: ") << message << '\n';
    };
    return sink;
}

} // namespace

LogSink set_log_sink(LogSink sink) {
    std::lock_guard lock(sink_mutex());
    auto previous = std::move(current_sink());
    current_sink() = std::move(sink);
    return previous;
}

void log(LogLevel level, std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (current_sink()) {
        current_sink()(level, message);
    }
}

} // namespace driftrank
