#pragma once

namespace forec {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace forec
