#pragma once

#include <string>
#include <vector>

namespace kovae::cli {

/// Entry point behind the `kovae` binary. Exit codes: 0 success, 1 runtime
/// failure, 2 unknown verb, 3 invalid configuration.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

}  // namespace kovae::cli
