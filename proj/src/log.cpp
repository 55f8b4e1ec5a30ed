#include "vectorplus/log.hpp"

#include <cstdlib>
#include <memory>
#include <string_view>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace vectorplus::log {

namespace {

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_logger_st("vectorplus");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("VECTORPLUS_LOG");
    const std::string_view level = env ? env : "error";
    if (level == "debug") {
      l->set_level(spdlog::level::debug);
    } else if (level == "info") {
      l->set_level(spdlog::level::info);
    } else {
      l->set_level(spdlog::level::err);
    }
    return l;
  }();
  return *instance;
}

}  // namespace

void error(const std::string& message) { logger().error(message); }
void info(const std::string& message) { logger().info(message); }
void debug(const std::string& message) { logger().debug(message); }

}  // namespace vectorplus::log
