#pragma once

namespace crgtool {

// Parses and runs one CLI invocation. Exit codes: 0 success, 1 usage error,
// 2 runtime failure.
int run_cli(int argc, char** argv);

}  // namespace crgtool
