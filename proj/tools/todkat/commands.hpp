#pragma once

#include <string>
#include <vector>

namespace todkat::cli {

/// Parses arguments, runs one subcommand and returns the process exit code.
/// Failures print one line to stderr: `todkat: error kind=<kind> msg=<text>`.
int run(int argc, char** argv);

}  // namespace todkat::cli
