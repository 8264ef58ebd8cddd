#pragma once

namespace ctbody {

inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;
inline constexpr int kVersionPatch = 0;
inline constexpr const char* kVersionString = "0.1.0";

// Bumped when the corresponding on-disk layout changes incompatibly.
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kVolumeFormatVersion = 1;
inline constexpr int kDepthFormatVersion = 1;

}  // namespace ctbody
