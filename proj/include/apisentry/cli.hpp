#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace apisentry::cli {

/// Runs one `apisentry` task. `args` excludes the program name.
/// Returns 0 on success, 1 on validation errors, 2 on internal errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace apisentry::cli
