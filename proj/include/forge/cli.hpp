#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace forge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name). Machine
/// readable results go to `out`, usage errors and help for bad invocations
/// to `err`. Returns 0 on success, 1 on processing failure, 2 on usage error.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
