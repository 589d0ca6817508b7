#pragma once

namespace pglmm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pglmm
