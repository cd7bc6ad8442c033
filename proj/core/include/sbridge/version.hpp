#pragma once

namespace sbridge {

inline constexpr const char* kVersion = "0.1.0";

/// Version string stamped into text reports; binary dumps carry their own
/// format version in the header (see field_io.hpp and docs/formats.md).
inline constexpr const char* kFormatVersion = "format v1";

}  // namespace sbridge
