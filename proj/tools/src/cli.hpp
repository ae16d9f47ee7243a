#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sprout::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,        // unknown flag or subcommand, malformed value
  kBadConfig = 3,    // invalid configuration or missing conditional flag
  kMissingInput = 4, // unreadable file or required path flag absent
  kBadData = 5,      // malformed or inconsistent input data
};

// `args` excludes the program name. Errors are reported on `err` as one line:
//   sprout: error[<kind>]: <message>
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

} // namespace sprout::cli
