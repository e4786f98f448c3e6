#include "cpokit/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace cpokit {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto lg = spdlog::stderr_color_mt("cpokit");
    lg->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    const char* env = std::getenv("CPOKIT_LOG");
    const std::string level = env ? env : "";
    if (level == "quiet")
      lg->set_level(spdlog::level::err);
    else if (level == "info")
      lg->set_level(spdlog::level::info);
    else if (level == "debug")
      lg->set_level(spdlog::level::debug);
    else
      lg->set_level(spdlog::level::warn);
    return lg;
  }();
  return instance;
}

}  // namespace cpokit
