#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sdb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `sdb` command line. `args` excludes the program name.
/// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// RFC 4180 field: quoted when it contains a comma, quote or line break.
std::string csv_field(const std::string& s);

}  // namespace sdb
