#include "log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <memory>
#include <mutex>

namespace forge::log {

std::optional<spdlog::level::level_enum> parse_level(std::string_view name) {
  if (name == "error") return spdlog::level::err;
  if (name == "warn") return spdlog::level::warn;
  if (name == "info") return spdlog::level::info;
  if (name == "debug") return spdlog::level::debug;
  return std::nullopt;
}

spdlog::logger& get() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto l = std::make_shared<spdlog::logger>("forge", sink);
    l->set_pattern("forge: %l: %v");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("FORGE_LOG")) {
      if (auto lvl = parse_level(env)) l->set_level(*lvl);
    }
    return l;
  }();
  return *logger;
}

void init(std::optional<spdlog::level::level_enum> level) {
  if (level) get().set_level(*level);
}

}  // namespace forge::log
