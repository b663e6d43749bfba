#pragma once

#include <string>
#include <vector>

namespace covforge::cli {

// Exit codes: 0 success, 1 user/config error, 2 truncated success
// (budget ran out; partial outputs were kept).
constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitTruncated = 2;

int run(int argc, const char* const* argv);
int run(std::vector<std::string> args);  // args without the program name

}  // namespace covforge::cli
