#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace swingcert::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUnstable = 2;

/// Runs one command. args[0] is the program name. Summaries go to `out`;
/// errors go to `err` as one line: `swingcert: error[<kind>]: <message>`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swingcert::cli
