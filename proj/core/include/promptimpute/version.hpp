#pragma once

namespace prompt_impute {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prompt_impute
