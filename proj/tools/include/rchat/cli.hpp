#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rchat/config.hpp"

namespace rchat::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kOutcome = 2,
  kProviderFailure = 3,
};

// Runs one command line (args[0] is the program name). Normal output goes to
// `out`, diagnostics and traces to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env());

}  // namespace rchat::cli
