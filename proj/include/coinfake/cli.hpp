#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coinfake::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,      ///< bad flags, unreadable or malformed inputs
  kNumericalError = 2,  ///< training or filtering failed on valid input
};

/// Runs `coinfake <command> ...` with args[0] the program name. Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "COINFAKE_OUT";

}  // namespace coinfake::cli
