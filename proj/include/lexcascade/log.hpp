#pragma once

#include <functional>
#include <string_view>

namespace lexcascade {

using WarningSink = std::function<void(std::string_view)>;

/// Routes library warnings. The default sink writes to stderr.
/// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

void log_warning(std::string_view message);

}  // namespace lexcascade
