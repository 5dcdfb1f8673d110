#pragma once

#include <chrono>
#include <string>

namespace lexcascade::detail {

struct SubprocessResult {
    int exit_status = 0;  // -1 when terminated by a signal
    bool timed_out = false;
    bool input_broken = false;  // child closed stdin before consuming all input
    std::string out;
    std::string err;
};

/// Runs `/bin/sh -c command`, feeds `input` to its stdin, then closes it.
/// Reads stdout/stderr concurrently. Kills the child on timeout.
SubprocessResult run_subprocess(const std::string& command, const std::string& input,
                                std::chrono::duration<double> timeout);

}  // namespace lexcascade::detail
