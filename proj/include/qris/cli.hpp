#pragma once

namespace qris {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the qris tool. Prints a one-line JSON summary on stdout,
/// progress on stderr (filtered by QRIS_LOG=error|info|debug).
int run_cli(int argc, const char* const* argv);

}  // namespace qris
