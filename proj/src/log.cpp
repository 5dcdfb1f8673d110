#include "lexcascade/log.hpp"

#include <iostream>
#include <mutex>

namespace lexcascade {

namespace {

std::mutex& sink_mutex()
{
    static std::mutex m;
    return m;
}

WarningSink& current_sink()
{
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink)
{
    std::lock_guard lock(sink_mutex());
    auto previous = std::move(current_sink());
    current_sink() = std::move(sink);
    return previous;
}

void log_warning(std::string_view message)
{
    std::lock_guard lock(sink_mutex());
    if (current_sink()) {
        current_sink()(message);
    }
}

}  // namespace lexcascade
