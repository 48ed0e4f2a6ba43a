#pragma once

namespace parn::cli {

/// Entry point behind the command-line tool; exposed so tests can drive the
/// exact code path the binary runs.  Returns the process exit code: 0 on
/// success, 2 on usage errors, 1 on runtime failures.
int run(int argc, const char* const* argv);

}  // namespace parn::cli
