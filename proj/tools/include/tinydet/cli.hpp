#pragma once

#include <ostream>
#include <span>
#include <string>

namespace tinydet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `tinydet-kit` invocation. `args` excludes the program name.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace tinydet::cli
