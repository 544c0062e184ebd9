#pragma once

namespace bidomain {

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace bidomain
