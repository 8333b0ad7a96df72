#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spikedec {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Parses and runs one `spikedec` command line (argv[0] is the program name).
/// Returns 0 on success, 1 on a usage error and 2 on a data or model error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spikedec
