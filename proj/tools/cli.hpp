// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adapters::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;     // bad flags, configs, compositions, checkpoints
inline constexpr int kExitCheckFailed = 2; // an acceptance check ran and failed

/// Runs the command line `args` (without the program name), writing results
/// to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adapters::cli
