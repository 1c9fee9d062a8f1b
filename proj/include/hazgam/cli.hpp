#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hazgam {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs the command-line interface. `args` excludes the program name.
/// Returns 0 on success, 1 on usage or configuration errors, 2 on data or
/// numeric errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

std::string version();

}  // namespace hazgam
