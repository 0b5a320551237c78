#pragma once

#include <ostream>

namespace cytofuse {

// Exit codes returned by run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitInvalid = 2;

// Entry point for the `cyto-fuse` tool with subcommands fuse, eval, compare
// and synth. Summaries go to `out` (JSON unless a table is requested),
// progress and diagnostics to `err`. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cytofuse
