#ifndef BEASTPIPE_CLI_HPP_
#define BEASTPIPE_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace beastpipe::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConnectivity = 3,
};

// args excludes the program name. serve-env blocks until SIGINT/SIGTERM.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace beastpipe::cli

#endif  // BEASTPIPE_CLI_HPP_
