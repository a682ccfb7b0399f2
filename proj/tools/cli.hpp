#pragma once

#include <iosfwd>

namespace holoev::cli {

/// Exit codes: 0 success, 1 usage error, 2 data error.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace holoev::cli
