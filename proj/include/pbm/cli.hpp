#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pbm::cli {

enum ExitCode : int { kOk = 0, kFindings = 1, kUsage = 2, kIoError = 3 };

/// Runs pbmctl with `args` (args[0] is the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pbm::cli
