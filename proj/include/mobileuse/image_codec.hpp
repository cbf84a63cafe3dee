#pragma once

#include <mobileuse/types.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mobileuse {

// 8-bit RGB PNG, fixed compression settings so output is reproducible.
std::vector<std::uint8_t> encode_png(const Screenshot& image);

// Accepts gray, gray+alpha, palette, RGB and RGBA input; alpha is dropped.
// Throws Error{capture_decode_failure}.
Screenshot decode_png(std::span<const std::uint8_t> bytes);

void write_png_file(const std::string& path, const Screenshot& image);
Screenshot read_png_file(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace mobileuse
