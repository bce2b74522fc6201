#pragma once

#include <iosfwd>

namespace cdl {

// Entry point of the `cdl` tool. Exit codes: 0 success, 1 invalid input,
// 2 runtime or numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdl
