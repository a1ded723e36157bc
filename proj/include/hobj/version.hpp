#pragma once

namespace hobj {

inline constexpr const char* kVersion = "0.1.0";

} // namespace hobj
