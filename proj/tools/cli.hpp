#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rcmcal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // bad flags, unreadable input, invalid config
inline constexpr int kExitRuntime = 3;  // the computation itself failed

/// Runs the command line `args` (without the program name). Failures print
/// one line "error: <class>: <message>" to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rcmcal
