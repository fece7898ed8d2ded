#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dascl::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Runs the command line `args` (args[0] is the program name). Progress and
/// errors go to `err`; machine output selected with --emit stdout goes to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dascl::cli
