#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smartcourse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (without argv[0]). Returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

std::string synopsis();

}  // namespace smartcourse::cli
