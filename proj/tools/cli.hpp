#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmda::cli {

/// Runs one `mmda <verb> ...` invocation. Results go to `out`, log lines and
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmda::cli
