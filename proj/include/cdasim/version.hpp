#pragma once

namespace cdasim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cdasim
