#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cpretrieve::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationError = 1,
    kProviderError = 2,
    kPartialFailure = 3,
};

/// Entry point for `cpretrieve <subcommand> ...`. args excludes the program name.
/// Human-readable output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cpretrieve::cli
