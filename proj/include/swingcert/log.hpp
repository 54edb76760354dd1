#pragma once

#include <memory>

namespace spdlog {
class logger;
}

namespace swingcert {

// Shared stderr logger. Verbosity comes from SWINGCERT_LOG_LEVEL
// (trace, debug, info, warn, error, off); default is warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace swingcert
