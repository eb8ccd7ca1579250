// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace smp {

// CLI entry point behind the smpctl binary. Subcommands: gen-data, train,
// finetune, finetune-router, eval, infer, ablate-gates, ablate-activation,
// metrics; each accepts --config FILE plus repeatable --set key=value
// overrides. Returns the process exit code: 0 success, 1 usage error,
// 2 validation error, 3 runtime failure.
int cmd_dispatch(const std::vector<std::string>& args);
int cmd_dispatch(int argc, const char* const* argv);

}  // namespace smp
