#pragma once

#include <iosfwd>

namespace saife::cli {

// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,      // any other error
    kUsage = 2,        // bad flags or values
    kIo = 3,           // unreadable/unwritable files
    kIntegrity = 4,    // corrupt or version-mismatched files
    kDivergence = 5,   // training loss diverged
    kConfig = 6,       // inconsistent configuration or missing stats
    kFetch = 7,        // sensor API failures
};

// Entry point behind the `saife` binary; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace saife::cli
