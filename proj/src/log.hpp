#pragma once

#include <spdlog/spdlog.h>

#include <optional>
#include <string>
#include <string_view>

namespace forge::log {

/// Parses error|warn|info|debug; nullopt for anything else.
std::optional<spdlog::level::level_enum> parse_level(std::string_view name);

/// Configures the stderr logger. An explicit level wins over FORGE_LOG;
/// without either the level is warn.
void init(std::optional<spdlog::level::level_enum> level = std::nullopt);

spdlog::logger& get();

template <typename... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args) {
  get().error(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  get().warn(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  get().info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  get().debug(fmt, std::forward<Args>(args)...);
}

}  // namespace forge::log
