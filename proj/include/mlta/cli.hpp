#pragma once

// Command-line driver shared by the `mlta` tool and the tests.

#include <iosfwd>

namespace mlta {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitEstimation = 2, kExitIo = 3 };

/// Runs one mode end to end. Reports go to --out or `out`; diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace mlta
