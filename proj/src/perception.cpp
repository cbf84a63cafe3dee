#include <mobileuse/perception.hpp>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace mobileuse {

namespace {

void require_same_dims(const Screenshot& a, const Screenshot& b) {
    if (a.empty() || b.empty()) throw Error(Errc::invalid_argument, "empty screenshot");
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(Errc::dimension_mismatch,
                    "screenshot sizes differ: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

}  // namespace

std::vector<BoundingBox> diff_regions(const Screenshot& before, const Screenshot& after, const DiffParams& params) {
    require_same_dims(before, after);
    if (params.block_size < 1) throw Error(Errc::invalid_argument, "block_size must be >= 1");
    if (params.per_block_threshold < 0) throw Error(Errc::invalid_argument, "threshold must be >= 0");

    const int w = before.width();
    const int h = before.height();
    const int bs = params.block_size;
    const int cols = (w + bs - 1) / bs;
    const int rows = (h + bs - 1) / bs;

    // Sum of absolute channel differences per cell.
    std::vector<std::uint64_t> sums(static_cast<std::size_t>(cols) * rows, 0);
    const auto& pa = before.pixels();
    const auto& pb = after.pixels();
    for (int y = 0; y < h; ++y) {
        const std::size_t row_off = static_cast<std::size_t>(y) * w * 3;
        std::uint64_t* cell_row = sums.data() + static_cast<std::size_t>(y / bs) * cols;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = row_off + static_cast<std::size_t>(x) * 3;
            const int d = std::abs(pa[i] - pb[i]) + std::abs(pa[i + 1] - pb[i + 1]) + std::abs(pa[i + 2] - pb[i + 2]);
            cell_row[x / bs] += static_cast<std::uint64_t>(d);
        }
    }

    std::vector<char> marked(sums.size(), 0);
    for (int cy = 0; cy < rows; ++cy) {
        const int ch = std::min(bs, h - cy * bs);
        for (int cx = 0; cx < cols; ++cx) {
            const int cw = std::min(bs, w - cx * bs);
            const double mean = static_cast<double>(sums[static_cast<std::size_t>(cy) * cols + cx]) /
                                (static_cast<double>(cw) * ch * 3.0);
            marked[static_cast<std::size_t>(cy) * cols + cx] = mean > params.per_block_threshold ? 1 : 0;
        }
    }

    std::vector<BoundingBox> boxes;
    std::vector<char> seen(marked.size(), 0);
    std::vector<std::pair<int, int>> stack;
    for (int cy = 0; cy < rows; ++cy) {
        for (int cx = 0; cx < cols; ++cx) {
            const std::size_t idx = static_cast<std::size_t>(cy) * cols + cx;
            if (!marked[idx] || seen[idx]) continue;
            int min_x = cx, max_x = cx, min_y = cy, max_y = cy;
            seen[idx] = 1;
            stack.assign(1, {cx, cy});
            while (!stack.empty()) {
                auto [x, y] = stack.back();
                stack.pop_back();
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= cols || ny >= rows) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * cols + nx;
                        if (marked[n] && !seen[n]) {
                            seen[n] = 1;
                            stack.emplace_back(nx, ny);
                        }
                    }
                }
            }
            const int px0 = min_x * bs;
            const int py0 = min_y * bs;
            const int px1 = std::min(w, (max_x + 1) * bs);
            const int py1 = std::min(h, (max_y + 1) * bs);
            boxes.push_back(BoundingBox{px0, py0, px1 - px0, py1 - py0});
        }
    }
    std::sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    return boxes;
}

std::vector<bool> outline_mask(int width, int height, const BoundingBox& box) {
    std::vector<bool> mask(static_cast<std::size_t>(width) * height, false);
    const int x0 = std::max(0, box.x);
    const int y0 = std::max(0, box.y);
    const int x1 = std::min(width, box.x + box.width);
    const int y1 = std::min(height, box.y + box.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const bool edge = x - box.x < kOutlineWidth || y - box.y < kOutlineWidth ||
                              box.x + box.width - 1 - x < kOutlineWidth || box.y + box.height - 1 - y < kOutlineWidth;
            if (edge) mask[static_cast<std::size_t>(y) * width + x] = true;
        }
    }
    return mask;
}

Screenshot annotate(const Screenshot& image, const std::vector<BoundingBox>& boxes) {
    if (image.empty()) throw Error(Errc::invalid_argument, "empty screenshot");
    const int w = image.width();
    const int h = image.height();
    for (const auto& b : boxes) {
        if (b.width < 1 || b.height < 1 || b.x < 0 || b.y < 0 || b.x + b.width > w || b.y + b.height > h) {
            throw Error(Errc::out_of_bounds, "box (" + std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                                                 std::to_string(b.width) + "," + std::to_string(b.height) +
                                                 ") outside image");
        }
    }
    std::vector<std::uint8_t> rgb = image.pixels();
    for (const auto& b : boxes) {
        const auto mask = outline_mask(w, h, b);
        for (int y = b.y; y < b.y + b.height; ++y) {
            for (int x = b.x; x < b.x + b.width; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                if (!mask[p]) continue;
                rgb[p * 3] = 255;
                rgb[p * 3 + 1] = 0;
                rgb[p * 3 + 2] = 0;
            }
        }
    }
    return Screenshot(w, h, std::move(rgb), image.step_index(), image.captured_at());
}

double changed_fraction(const Screenshot& a, const Screenshot& b) {
    require_same_dims(a, b);
    const auto& pa = a.pixels();
    const auto& pb = b.pixels();
    std::size_t changed = 0;
    for (std::size_t i = 0; i < pa.size(); i += 3) {
        const int d = std::max({std::abs(pa[i] - pb[i]), std::abs(pa[i + 1] - pb[i + 1]), std::abs(pa[i + 2] - pb[i + 2])});
        if (d > kChangedPixelFloor) ++changed;
    }
    return static_cast<double>(changed) / static_cast<double>(pa.size() / 3);
}

}  // namespace mobileuse
