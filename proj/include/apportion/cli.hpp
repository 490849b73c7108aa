#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace apportion {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace apportion
