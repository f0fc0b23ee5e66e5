#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mushroom {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Runs the tool on `args` (without the program name). Failures print one
/// line "error: kind=<usage|data|numeric> code=<n> message=<text>" to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mushroom
