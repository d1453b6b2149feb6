#pragma once

#include <string>
#include <vector>

namespace ihas {

// Full command-line front end; returns the process exit status.
// Exit codes: 0 success, 2 stage-precondition violations, 1 anything else.
int run_cli(const std::vector<std::string>& args);

} // namespace ihas
