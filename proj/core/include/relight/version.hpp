#pragma once

namespace relight {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace relight
