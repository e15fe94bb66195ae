#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cavmarl::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,       // unknown flag or missing argument
  kExitConfig = 3,      // unreadable or invalid configuration
  kExitCheckpoint = 4,  // checkpoint or trace schema/version mismatch
  kExitIo = 5,
  kExitMismatch = 6,  // replay differs from the trace
};

/// Subcommands: train, evaluate, replay, inspect-config. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

const char* version_string();

}  // namespace cavmarl::cli
