#pragma once

#include <string>
#include <string_view>

#include "quann/synthgen.hpp"

namespace quann {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2, kExitVerifyFailed = 3 };

struct Profile {
  std::string name;
  SplitCounts counts;
  std::size_t epochs = 0;
  std::size_t replicates = 0;
};

// "paper": 20000/2000/3000, 20 epochs, 10 replicates.
// "desk":  2000/500/500, 5 epochs, 5 replicates.
Profile profile_by_name(std::string_view name);

// Entry point of the quann executable; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace quann
