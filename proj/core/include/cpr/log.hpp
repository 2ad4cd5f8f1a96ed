#pragma once

#include <spdlog/spdlog.h>

namespace cpr {

/// Library logger (stderr). Level comes from CPR_LOG_LEVEL
/// (trace|debug|info|warn|error|off), default "warn".
spdlog::logger& log();

}  // namespace cpr
