#pragma once

namespace scanscribe {

inline constexpr const char* kToolName = "scanscribe";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace scanscribe
