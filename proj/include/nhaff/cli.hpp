#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nhaff::cli {

// Exit codes
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kGuardStop = 3;
inline constexpr int kSolverError = 4;
inline constexpr int kCheckFailed = 5;

/// Runs one command line (args[0] is the subcommand). Output goes to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nhaff::cli
