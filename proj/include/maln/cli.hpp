#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace maln::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInvalidInput = 2,    // bad arguments, shape/domain errors, infeasible lattice
  kFormatError = 3,     // unreadable or malformed tensor/JSON files
  kLimitRefused = 4,    // brute-force oracle above the combinatorial limit
};

/// Environment variable overriding the oracle's enumeration limit.
inline constexpr const char* kCombLimitEnv = "MALN_COMB_LIMIT";

/// Runs one subcommand. `args` excludes the program name. On failure a
/// one-line JSON object {"error": code, "message": text} goes to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace maln::cli
