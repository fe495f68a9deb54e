#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace choicectx::cli {

// Dispatches one subcommand invocation. Returns 0 on success, 1 on usage
// errors, 2 on data/numeric errors. Reports go to --out (atomic
// temp-file-plus-rename) or to `out` when --out is absent.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace choicectx::cli
