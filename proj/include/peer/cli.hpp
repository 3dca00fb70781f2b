#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace peer {

/// Subcommands gsvd, fit, diagnose, tune, simulate and report.
/// Returns 0 on success, 2 on a usage error (usage printed to `err`) and 1 on a
/// computation error (a JSON error record printed to `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Convenience overload; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace peer
