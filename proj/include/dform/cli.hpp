#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dform/io.hpp"

namespace dform::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 20240917;

enum ExitCode : int { kOk = 0, kInputError = 1, kNumericDiagnostic = 2 };

/// Runs the command line `args` (args[0] is the program name). The JSON report
/// goes to `out` unless --out names a file, in which case `out` receives the
/// text table; otherwise the table goes to `err`. Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Aligned text rendering of a report document.
std::string render_table(const io::Json& report);

}  // namespace dform::cli
