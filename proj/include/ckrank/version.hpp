#pragma once

namespace ckrank {

inline constexpr const char* kToolName = "ckrank";
inline constexpr const char* kVersion = "0.1.0";

} // namespace ckrank
