// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace probsr
{

/// Runs the `probsr` command line with `args` (program name excluded).
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
int run_cli(const std::vector<std::string> &args, std::ostream &out = std::cout, std::ostream &err = std::cerr);

}  // namespace probsr
