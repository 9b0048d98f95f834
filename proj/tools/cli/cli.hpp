#pragma once

#include <iosfwd>

namespace xlenc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitInternal = 3,
};

/// Runs one command line (argv[0] is the program name). Reports go to `out`,
/// diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xlenc::cli
