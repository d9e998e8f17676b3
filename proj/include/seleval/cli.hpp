#pragma once

namespace seleval {

// Entry point behind the seleval binary; returns the process exit code
// (0 success, 1 validation error, 2 runtime/transport error).
int run_cli(int argc, const char* const* argv);

}  // namespace seleval
