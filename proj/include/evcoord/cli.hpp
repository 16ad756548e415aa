#pragma once

#include <iosfwd>

namespace evcoord {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point behind the `evcoord` executable. Returns 0 on success, 1 on a
/// runtime failure and 2 on usage errors or missing input artifacts.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evcoord
