#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rfkit::cli {

// Stable exit-code contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 1;       // unreadable file, syntax error, unknown preset, bad input flags
inline constexpr int kExitValidation = 2;  // architecture failed validation
inline constexpr int kExitTransform = 3;   // transform target unreachable or bad edit
inline constexpr int kExitDegenerate = 4;  // ERF gradient was all zero
inline constexpr int kExitInternal = 5;    // ERF support exceeded the analytic RF

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rfkit::cli
