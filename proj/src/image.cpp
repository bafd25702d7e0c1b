#include "deva/image.hpp"

#include <algorithm>
#include <cstring>

#include <png.h>

namespace deva {

namespace {

struct WriteSink {
    std::vector<std::uint8_t>* out;
};

void write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
    sink->out->insert(sink->out->end(), data, data + len);
}

void flush_cb(png_structp) {}

struct ReadSource {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void read_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
    if (src->pos + len > src->size) png_error(png, "truncated PNG");
    std::memcpy(data, src->data + src->pos, len);
    src->pos += len;
}

void warning_cb(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; keep these frames free of non-trivial locals.
bool write_rows(png_structp png, png_infop info, const Raster& raster) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < raster.height; ++y)
        png_write_row(png, raster.pixels.data() + static_cast<std::size_t>(y) * raster.width);
    png_write_end(png, nullptr);
    return true;
}

bool read_header(png_structp png, png_infop info, png_uint_32* width, png_uint_32* height, png_size_t* rowbytes) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    *width = png_get_image_width(png, info);
    *height = png_get_image_height(png, info);
    *rowbytes = png_get_rowbytes(png, info);
    return true;
}

bool read_rows(png_structp png, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& raster) {
    if (raster.width <= 0 || raster.height <= 0) throw PngError("empty raster");
    std::vector<std::uint8_t> out;
    WriteSink sink{&out};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_cb);
    if (!png) throw PngError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    bool ok = false;
    if (info) {
        png_set_write_fn(png, &sink, write_cb, flush_cb);
        ok = write_rows(png, info, raster);
    }
    png_destroy_write_struct(&png, &info);
    if (!ok) throw PngError("PNG encoding failed");
    return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw PngError("not a PNG");
    ReadSource src{bytes.data(), bytes.size(), 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_cb);
    if (!png) throw PngError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw PngError("png_create_info_struct failed");
    }
    png_set_read_fn(png, &src, read_cb);
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    png_size_t rowbytes = 0;
    if (!read_header(png, info, &width, &height, &rowbytes) || rowbytes != width || width == 0 || height == 0 ||
        width > 16384 || height > 16384) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PngError("unsupported or corrupt PNG header");
    }
    Raster out(static_cast<int>(width), static_cast<int>(height));
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * width;
    const bool ok = read_rows(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw PngError("corrupt PNG data");
    return out;
}

double ink_coverage(const Raster& raster) {
    if (raster.pixels.empty()) return 0.0;
    const auto ink = std::count_if(raster.pixels.begin(), raster.pixels.end(), [](auto p) { return p < 128; });
    return static_cast<double>(ink) / static_cast<double>(raster.pixels.size());
}

std::vector<int> row_ink_profile(const Raster& raster, int threshold) {
    std::vector<int> rows(static_cast<std::size_t>(raster.height), 0);
    for (int y = 0; y < raster.height; ++y)
        for (int x = 0; x < raster.width; ++x)
            if (raster.at(x, y) < threshold) ++rows[static_cast<std::size_t>(y)];
    return rows;
}

double headline_prominence(const Raster& raster) {
    auto rows = row_ink_profile(raster);
    std::vector<int> inked;
    for (int r : rows)
        if (r > 0) inked.push_back(r);
    if (inked.empty()) return 0.0;
    const int peak = *std::max_element(inked.begin(), inked.end());
    auto mid = inked.begin() + static_cast<std::ptrdiff_t>(inked.size() / 2);
    std::nth_element(inked.begin(), mid, inked.end());
    return static_cast<double>(peak) / static_cast<double>(*mid);
}

std::pair<int, int> ink_column_span(const Raster& raster, int threshold) {
    int first = -1;
    int last = -1;
    for (int x = 0; x < raster.width; ++x) {
        for (int y = 0; y < raster.height; ++y) {
            if (raster.at(x, y) < threshold) {
                if (first < 0) first = x;
                last = x;
                break;
            }
        }
    }
    return {first, last};
}

}  // namespace deva
