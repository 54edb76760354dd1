#include "swingcert/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace swingcert {

std::shared_ptr<spdlog::logger> logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto log = std::make_shared<spdlog::logger>(
        "swingcert", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    log->set_pattern("swingcert: %l: %v");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("SWINGCERT_LOG_LEVEL")) {
      level = spdlog::level::from_str(env);
    }
    log->set_level(level);
    return log;
  }();
  return instance;
}

}  // namespace swingcert
