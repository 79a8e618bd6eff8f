#pragma once

#include <iosfwd>

namespace ctsynth {

/// Exit codes: 0 success, 2 usage, 3 data, 4 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctsynth
