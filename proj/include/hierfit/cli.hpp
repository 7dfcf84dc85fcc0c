#pragma once

#include <iosfwd>
#include <string_view>

#include "hierfit/error.hpp"

namespace hierfit::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int { Ok = 0, UserError = 2, Numerical = 3, InvalidComparison = 4 };

int exit_code(ErrorKind kind);

/// Entry point of the `hierfit` tool: simulate, fit, test, compare, diagnose.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hierfit::cli
