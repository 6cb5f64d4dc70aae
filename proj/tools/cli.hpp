#pragma once

#include <iosfwd>

namespace istanet::cli {

// Exit codes: 0 success, 1 module error (bad input file, numeric failure),
// 2 usage error (bad or unknown flags, invalid values).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace istanet::cli
