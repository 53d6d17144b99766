#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eurnet::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kDataError = 3 };

/// Runs one command line (without the program name) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eurnet::cli
