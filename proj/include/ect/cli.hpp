#pragma once

// Command-line front end: synth-data, simulate-rgb, train, eval, gradcheck,
// params, flops, heatmap and convert.
//
// Exit codes: 0 success, 2 usage error, 1 runtime error. Machine-readable
// summaries go to `out` as lines starting with "RESULT ".

#include <ostream>
#include <string>
#include <vector>

namespace ect {

/// args excludes the program name. Seed precedence, lowest first: ECT_SEED,
/// then --config (a preset name or a key=value file), then explicit flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ect
