#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace varisk::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kInfeasible = 3,
};

/// Runs `varisk <subcommand> [--flag value]...`. `args` excludes the program
/// name. Structured results go to files or `out`; failures print one JSON
/// line {"error": kind, "message": ...} to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

} // namespace varisk::cli
