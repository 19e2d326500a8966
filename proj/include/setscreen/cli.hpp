#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace setscreen::cli {

/// Runs one command line (without the program name), e.g.
/// {"fit", "--summaries", "s.tsv", "--out", "model.json"}.
/// Returns the process exit code: 0 success, 1 validation or usage error,
/// 2 numerical failure, 3 I/O failure. Errors are reported on `err` as a
/// single line "error: <Name>: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace setscreen::cli
