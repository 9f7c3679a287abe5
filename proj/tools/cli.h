#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sotkit::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidation = 1, kUsage = 2 };

// Runs one command line (args excludes the program name). Data goes to
// `out`, diagnostics to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace sotkit::cli
