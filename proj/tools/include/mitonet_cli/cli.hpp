#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mitonet::cli {

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mitonet::cli
