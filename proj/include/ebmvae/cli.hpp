#pragma once

namespace ebmvae {

// Full command-line surface. Separated from main() so tests can drive
// subcommands in-process. Returns the process exit code: 0 success, 1 runtime
// failure (diagnostic on stderr), 2 usage errors (unknown subcommand or flag).
int cli_main(int argc, const char* const* argv);

}  // namespace ebmvae
