#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace star::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. The requested
/// artifact goes to `out`; logs and errors go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace star::cli
