#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cellseg::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kInternal = 3 };

/// Parses `args` (without the program name) and runs the chosen subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Artifact names written by `pipeline` for an output prefix.
std::string artifact_path(const std::string& prefix, const std::string& what);

}  // namespace cellseg::cli
