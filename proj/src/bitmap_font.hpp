#pragma once

#include <array>
#include <cstdint>

namespace mobileuse::detail {

// 8x8 glyphs for printable ASCII (0x20..0x7E). Row-major, bit 0 is the
// leftmost pixel. Characters outside the range render as '?'.
const std::array<std::uint8_t, 8>& glyph(char c) noexcept;

}  // namespace mobileuse::detail
