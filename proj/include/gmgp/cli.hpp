#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace gmgp::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 I/O or parse failure, 2 invalid input for the domain.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmgp::cli
