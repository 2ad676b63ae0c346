#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace statekit {

/// Entry point of the command-line tool: `analyze`, `simulate` or `sweep`.
/// `args` excludes the program name. Results go to `out` (or --output),
/// diagnostics and structured errors to `err`.
/// Returns 0 on success, 1 on usage errors, 2 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace statekit
