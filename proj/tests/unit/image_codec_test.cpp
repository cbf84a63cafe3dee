#include <mobileuse/error.hpp>
#include <mobileuse/image_codec.hpp>

#include <gtest/gtest.h>
#include <png.h>

#include "support/fixtures.hpp"

using namespace mobileuse;

namespace {

// RGBA PNG written directly with libpng.
std::vector<std::uint8_t> rgba_png(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t n) {
            auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            v->insert(v->end(), data, data + n);
        },
        nullptr);
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 4);
    for (int x = 0; x < w; ++x) {
        row[x * 4] = r;
        row[x * 4 + 1] = g;
        row[x * 4 + 2] = b;
        row[x * 4 + 3] = a;
    }
    for (int y = 0; y < h; ++y) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

TEST(ImageCodec, RoundTripIsLossless) {
    auto img = fixtures::with_rect(Screenshot::filled(37, 23, 12, 34, 56), 3, 4, 10, 5, 200, 100, 0);
    const auto bytes = encode_png(img);
    const auto back = decode_png(bytes);
    EXPECT_TRUE(back.same_raster(img));
    EXPECT_EQ(encode_png(img), bytes);
}

TEST(ImageCodec, DecodesRgbaDroppingAlpha) {
    const auto back = decode_png(rgba_png(5, 4, 9, 8, 7, 128));
    ASSERT_EQ(back.width(), 5);
    ASSERT_EQ(back.height(), 4);
    EXPECT_EQ(back.pixel(4, 3)[0], 9);
    EXPECT_EQ(back.pixel(4, 3)[1], 8);
    EXPECT_EQ(back.pixel(4, 3)[2], 7);
}

TEST(ImageCodec, CorruptInput) {
    const std::vector<std::uint8_t> junk{'n', 'o', 't', ' ', 'p', 'n', 'g', '!', 0, 1};
    try {
        decode_png(junk);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::capture_decode_failure);
    }
    auto bytes = encode_png(Screenshot::filled(8, 8, 1, 1, 1));
    bytes.resize(bytes.size() / 2);
    EXPECT_THROW(decode_png(bytes), Error);
}

TEST(ImageCodec, FileRoundTrip) {
    const auto dir = fixtures::temp_dir("codec");
    const auto path = (dir / "a.png").string();
    const auto img = Screenshot::filled(6, 6, 1, 2, 3);
    write_png_file(path, img);
    EXPECT_TRUE(read_png_file(path).same_raster(img));
}

TEST(Base64, KnownVectors) {
    auto enc = [](std::string s) {
        return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    };
    EXPECT_EQ(enc(""), "");
    EXPECT_EQ(enc("f"), "Zg==");
    EXPECT_EQ(enc("fo"), "Zm8=");
    EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}
