#pragma once

namespace s2am::cli {

/// Exit codes: 0 success, 1 usage/config/data error, 2 empty result.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitEmpty = 2;

/// Entry point for the `s2am` tool; subcommands synth, scenes, init, train,
/// eval, harmonize, gates.
int run(int argc, const char* const* argv);

} // namespace s2am::cli
