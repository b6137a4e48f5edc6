// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace diffrect::cli {

/// Exit codes: 0 success, 1 contract violation or bad usage, 2 I/O failure.
enum ExitCode : int { kOk = 0, kContract = 1, kIo = 2 };

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace diffrect::cli
