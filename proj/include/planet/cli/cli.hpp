// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace planet::cli {

/// Process exit codes of the `planet` tool.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kDataError = 2,
  kNumericalError = 3,
};

/// Runs one `planet` subcommand. `args` excludes the program name. Normal
/// output goes to `out`; failures print a single `error: <kind>: <message>`
/// line to `err` and return the matching exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace planet::cli
