#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mtekit {

enum ExitCode : int {
    kExitOk = 0,
    kExitInput = 2,
    kExitWarning = 3,
    kExitNumerical = 4,
};

/// Runs `mtekit <summarize|fit|simulate> ...`; `args` excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace mtekit
