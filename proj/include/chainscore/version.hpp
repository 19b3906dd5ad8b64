#pragma once

namespace chainscore {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace chainscore
