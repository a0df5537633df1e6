#pragma once

#include <string>
#include <vector>

namespace aada::cli {

/// Entry point shared by the binary and the in-process tests.
/// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
int run(const std::vector<std::string>& args);

}  // namespace aada::cli
