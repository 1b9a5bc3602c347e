#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace masolab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerification = 2;

/// Runs one subcommand. `args` excludes the program name. Machine-readable
/// records go to <out>/<command>.jsonl, the human summary to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace masolab
