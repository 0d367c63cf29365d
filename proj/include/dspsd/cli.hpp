#pragma once

#include <string>
#include <vector>

namespace dspsd {

// Exit codes: 0 success, 2 data error, 3 configuration or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitConfigError = 3;

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace dspsd
