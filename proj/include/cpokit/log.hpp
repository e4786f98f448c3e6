#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace cpokit {

/// Shared stderr logger. Level comes from CPOKIT_LOG (quiet|info|debug),
/// defaulting to warnings only.
std::shared_ptr<spdlog::logger> logger();

}  // namespace cpokit
