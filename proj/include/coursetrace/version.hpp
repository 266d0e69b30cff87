#pragma once

namespace coursetrace {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace coursetrace
