#pragma once

namespace plab::cli {

// Dispatches exactly one subcommand. Exit codes: 0 success, 1 flag/config
// validation failure, 2 runtime error. Diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace plab::cli
