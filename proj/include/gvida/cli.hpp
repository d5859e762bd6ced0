#pragma once

#include <string>
#include <vector>

namespace gvida::cli {

// Full command-line interface minus the program name. Returns the process
// exit code: 0 success, 2 configuration/format problems, 3 runtime failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace gvida::cli
