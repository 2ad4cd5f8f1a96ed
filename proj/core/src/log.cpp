#include "cpr/log.hpp"

#include <cstdlib>
#include <memory>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace cpr {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto logger = spdlog::stderr_color_mt("cpr");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("CPR_LOG_LEVEL")) level = spdlog::level::from_str(env);
    logger->set_level(level);
    logger->set_pattern("[%l] %v");
    return logger;
  }();
  return *instance;
}

}  // namespace cpr
