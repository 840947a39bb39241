#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs the `avc` command line. `args` excludes the program name. JSON
/// results go to `out`, progress and errors to `err`. Returns 0 on success,
/// 1 on a usage error and 2 when inputs are missing, malformed or cannot
/// satisfy the request.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avc
