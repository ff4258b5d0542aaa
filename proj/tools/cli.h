#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace noisylab::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitCrash = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitDivergence = 4,
};

/// Runs one command line (args[0] is the program name). Progress goes to
/// `out`; errors go to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// key=value lines, '#' starts a comment. Throws ConfigError on a line
/// without '='.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace noisylab::cli
