#pragma once

namespace crosslag {
inline constexpr const char* kVersion = "0.1.0";
}
