#pragma once

#include <iosfwd>

namespace tps::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;        // bad arguments, unreadable input, failed precondition
inline constexpr int kNumerical = 3;    // singular system or root finding gave up
inline constexpr int kDerivative = 4;   // derivative order not supported by the kernel
inline constexpr int kVersion = 5;      // model document has another format version

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tps::cli
