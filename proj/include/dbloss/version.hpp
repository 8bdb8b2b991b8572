#pragma once

namespace dbloss {

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace dbloss
