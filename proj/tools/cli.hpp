#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lcpvae::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericalAbort = 4,
};

/// Environment variable naming the default root for command outputs.
inline constexpr const char* kOutputRootEnv = "LCPVAE_OUTPUT_ROOT";

/// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lcpvae::cli
