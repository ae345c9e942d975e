#pragma once

namespace elopt {

inline constexpr const char* version = "0.1.0";

}  // namespace elopt
