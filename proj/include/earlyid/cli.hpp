#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace earlyid {

/// Exit codes: 0 success, 1 error, 2 success with empty output.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitEmpty = 2;

/// Runs the command line `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace earlyid
