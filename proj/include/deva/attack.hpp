#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deva/image.hpp"

// Baseline segmentation attacker. It sees only image bytes: nothing here may
// depend on render or obfuscation internals.
namespace deva::attack {

/// Otsu's threshold; pixels <= threshold are foreground (ink).
int otsu_threshold(const Raster& image);

struct Component {
    int left = 0;
    int right = 0;  // inclusive
    int top = 0;
    int bottom = 0;
    int area = 0;
};

/// 8-connected components of a binary mask (row-major, non-zero = set).
std::vector<Component> connected_components(const std::vector<std::uint8_t>& mask, int width, int height);

/// Union components whose horizontal spans overlap by at least `ratio` of the narrower span.
std::vector<Component> merge_overlapping(const std::vector<Component>& components, double ratio = 0.5);

struct Segmentation {
    int segments = 0;
    int headline_row = -1;
    int threshold = 0;
    int raw_components = 0;
};

/// Otsu binarization, headline = argmax row projection, erase +-2 rows around it,
/// 8-connected labelling, merge of components overlapping >= 50% horizontally.
Segmentation segment(const Raster& image);
Segmentation segment_png(std::span<const std::uint8_t> png_bytes);

}  // namespace deva::attack
