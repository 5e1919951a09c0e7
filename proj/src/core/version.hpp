#pragma once

namespace phwm {
inline constexpr const char* kVersion = "0.1.0";
// Bumped whenever the checkpoint layout changes incompatibly.
inline constexpr int kCheckpointFormat = 1;
}  // namespace phwm
