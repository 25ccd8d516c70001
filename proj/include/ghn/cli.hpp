#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ghn {

/// Entry point shared by the `ghn` executable and the tests. `args` excludes
/// the program name. Returns the process exit status.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Algebra, oracle and gradient properties, one line each. Returns the
/// number of failed properties.
int run_selftest(std::ostream& out);

}  // namespace ghn
