#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hail::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

/// Runs one invocation. `args` excludes the program name. Messages go to
/// `out`, errors to `err`; the return value is the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hail::cli
