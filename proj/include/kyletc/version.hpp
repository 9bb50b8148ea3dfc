#pragma once

namespace kyletc {
inline constexpr const char* kVersion = "0.1.0";
}
