#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace deva {

/// 8-bit grayscale, row-major, 0 = ink, 255 = background.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h, std::uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    friend bool operator==(const Raster&, const Raster&) = default;
};

class PngError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic 8-bit grayscale PNG (fixed zlib level, no ancillary chunks).
std::vector<std::uint8_t> encode_png(const Raster& raster);

/// Decodes any PNG libpng understands into 8-bit grayscale.
Raster decode_png(std::span<const std::uint8_t> bytes);

/// Fraction of pixels darker than 128.
double ink_coverage(const Raster& raster);

/// Number of pixels darker than `threshold` per row.
std::vector<int> row_ink_profile(const Raster& raster, int threshold = 128);

/// Max row projection over the median of non-empty rows; 0 when the image has no ink.
double headline_prominence(const Raster& raster);

/// [first, last] columns containing ink, or {-1, -1}.
std::pair<int, int> ink_column_span(const Raster& raster, int threshold = 128);

}  // namespace deva
