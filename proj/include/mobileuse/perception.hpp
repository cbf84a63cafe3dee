#pragma once

// Visual difference between consecutive screenshots: changed-region boxes,
// red-outline annotation, and the changed-pixel fraction used to detect
// repeated screens.

#include <mobileuse/types.hpp>

#include <vector>

namespace mobileuse {

struct DiffParams {
    int block_size = 16;
    double per_block_threshold = 8.0;  // mean |delta| per channel, 0..255
};

struct BoundingBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const BoundingBox&) const = default;

    bool contains(int px, int py) const noexcept {
        return px >= x && py >= y && px < x + width && py < y + height;
    }
    bool contains(const BoundingBox& other) const noexcept {
        return other.x >= x && other.y >= y && other.x + other.width <= x + width &&
               other.y + other.height <= y + height;
    }
};

// Grid-block diff: cells whose mean absolute per-channel difference exceeds
// the threshold are merged 8-connectedly; one box per component, sorted by
// (y, x). Throws Error{dimension_mismatch} / Error{invalid_argument}.
std::vector<BoundingBox> diff_regions(const Screenshot& before, const Screenshot& after,
                                      const DiffParams& params = {});

inline constexpr int kOutlineWidth = 3;

// Copy of `image` with a red outline drawn along the inside edge of every
// box. Throws Error{out_of_bounds} for boxes not within the image.
Screenshot annotate(const Screenshot& image, const std::vector<BoundingBox>& boxes);

// Pixels drawn by annotate() for one box, as a row-major mask over the image.
std::vector<bool> outline_mask(int width, int height, const BoundingBox& box);

inline constexpr int kChangedPixelFloor = 4;

// Fraction of pixels whose max per-channel |delta| exceeds kChangedPixelFloor.
double changed_fraction(const Screenshot& a, const Screenshot& b);

}  // namespace mobileuse
