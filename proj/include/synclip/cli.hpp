#pragma once

namespace synclip {

// Entry point behind the synclip binary. Exit codes: 0 success, 2 config or
// usage error, 3 numeric failure, 4 I/O error.
int cli_run(int argc, const char* const* argv);

}  // namespace synclip
