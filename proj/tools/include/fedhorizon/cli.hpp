#pragma once

#include <string>
#include <vector>

namespace fedhorizon::cli {

/// Entry point of the `fedhorizon` tool. Returns the process exit status:
/// 0 success, 1 usage or config error, 2 data error, 3 protocol or timeout,
/// 4 cannot listen, 5 cannot reach the coordinator.
int main(int argc, char** argv);

/// Same, from an argument list without the program name.
int run(const std::vector<std::string>& args);

}  // namespace fedhorizon::cli
