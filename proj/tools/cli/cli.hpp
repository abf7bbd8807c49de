#pragma once

namespace causalma::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitEstimation = 2;

// Entry point of the causalma tool. Returns the process exit status:
// 0 on success, 1 on input or configuration errors, 2 when estimation fails.
int run(int argc, const char* const* argv);

}  // namespace causalma::cli
