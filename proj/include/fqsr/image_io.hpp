// PNG input/output for 8-bit RGB rasters. Images travel through the engine
// as (1, 3, H, W) real tensors scaled to [0, 1]; writing rounds back to the
// 8-bit lattice, so decode-encode round trips are value identical.
#ifndef FQSR_IMAGE_IO_HPP_
#define FQSR_IMAGE_IO_HPP_

#include <png.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fqsr/errors.hpp"
#include "fqsr/tensor.hpp"

namespace fqsr {

namespace detail {

struct FileCloser {
    std::FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace detail

// Decodes a PNG into (1, 3, H, W) with values in [0, 1]. Grayscale, palette
// and 16-bit inputs are expanded to 8-bit RGB; alpha is dropped.
inline RealTensor read_png(const std::string& path) {
    detail::FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) throw IoError("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("read_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: corrupt or unsupported file " + path);
    }
    png_init_io(png, fc.f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<unsigned char> raster(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RealTensor out(Shape{1, 3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
    for (std::int64_t y = 0; y < out.shape().h; ++y)
        for (std::int64_t x = 0; x < out.shape().w; ++x) {
            const std::size_t base = 3 * (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x));
            for (std::int64_t c = 0; c < 3; ++c)
                out(0, c, y, x) = raster[base + static_cast<std::size_t>(c)] / 255.0;
        }
    return out;
}

// Encodes a (1, 3, H, W) tensor as 8-bit RGB; values are clamped to [0, 1]
// and rounded half away from zero onto the 8-bit lattice.
inline void write_png(const std::string& path, const RealTensor& img) {
    const Shape s = img.shape();
    if (s.n != 1 || s.c != 3)
        throw ShapeError("write_png: expected (1, 3, H, W), got " + s.str());

    detail::FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) throw IoError("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("write_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("write_png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: write failed for " + path);
    }
    png_init_io(png, fc.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(s.w) * 3);
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                const double v = std::min(1.0, std::max(0.0, img(0, c, y, x)));
                row[3 * static_cast<std::size_t>(x) + static_cast<std::size_t>(c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace fqsr

#endif  // FQSR_IMAGE_IO_HPP_
