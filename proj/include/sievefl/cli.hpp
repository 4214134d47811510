#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sievefl {

/// Process exit codes shared by every command.
enum ExitCode : int {
    kExitOk = 0,
    kExitGate = 1,   // acceptance gate violated, or no bug completed
    kExitInput = 2,  // bad input or configuration
};

/// `sievefl index|run|eval ...`. Writes reports to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sievefl
