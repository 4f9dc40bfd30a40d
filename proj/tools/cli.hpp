#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ntkf::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDivergence = 3,
  kUnsupportedArchitecture = 4,
};

/// Runs the command line `args` (without the program name). Summaries go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace ntkf::cli
