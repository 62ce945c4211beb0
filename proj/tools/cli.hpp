#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace partfuse {

// args excludes the program name. Returns the process exit code:
// 0 ok, 1 usage, 2 data, 3 numerical.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partfuse
