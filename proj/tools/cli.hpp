#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dyncode::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kAnalysisError = 1;
inline constexpr int kUsageError = 2;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyncode::cli
