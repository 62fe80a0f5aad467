#ifndef BSLAB_CLI_APP_HPP_
#define BSLAB_CLI_APP_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace bslab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

// Entry point of the `bslab` tool. `args` excludes the program name.
// Subcommands: train, sweep, crossplay, serve, replay, export, rerun.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bslab::cli

#endif  // BSLAB_CLI_APP_HPP_
