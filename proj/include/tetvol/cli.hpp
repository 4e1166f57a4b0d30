#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tetvol::cli {

// argv-style arguments, excluding the program name. Machine-readable JSON goes
// to `out`, human diagnostics to `err`. Returns the process exit code:
// 0 success, 1 runtime/validation failure, 2 usage or config errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tetvol::cli
