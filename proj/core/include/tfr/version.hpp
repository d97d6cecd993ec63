#pragma once

namespace tfr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tfr
