#pragma once

#include <iosfwd>

namespace umwfl {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitValidation = 3,
  kExitNumeric = 4,
};

/// Entry point of the `umwfl` tool. Subcommands: optimize, simulate,
/// mse-check, validate. Returns one of ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace umwfl
