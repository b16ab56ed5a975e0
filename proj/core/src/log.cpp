#include "fedhorizon/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>
#include <string_view>

namespace fedhorizon {

void configure_logging() {
  auto logger = spdlog::get("fedhorizon");
  if (!logger) logger = spdlog::stderr_color_mt("fedhorizon");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  const char* env = std::getenv("FEDHORIZON_LOG");
  const std::string_view level = env ? env : "info";
  auto parsed = spdlog::level::from_str(std::string(level));
  // from_str maps unknown names to off
  if (parsed == spdlog::level::off && level != "off") parsed = spdlog::level::info;
  spdlog::set_level(parsed);
}

}  // namespace fedhorizon
