#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace siamreid {

// Exit codes shared by every command.
enum ExitCode : int {
  exit_ok = 0,
  exit_check_failed = 1,
  exit_usage = 2,
  exit_data = 3,
  exit_divergence = 4,
};

// Runs `siamreid <command> ...`; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace siamreid
