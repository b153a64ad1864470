#pragma once

namespace bwa {
inline constexpr const char* kVersion = "0.1.0";
}
