#include "labtwin/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string_view>

namespace labtwin {

void init_logging_from_env() {
  auto logger = spdlog::stderr_color_mt("labtwin");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char *env = std::getenv("LABTWIN_LOG");
  const std::string_view level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

} // namespace labtwin
