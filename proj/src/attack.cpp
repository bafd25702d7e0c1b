#include "deva/attack.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace deva::attack {

int otsu_threshold(const Raster& image) {
    std::array<std::uint64_t, 256> hist{};
    for (auto p : image.pixels) ++hist[p];
    const double total = static_cast<double>(image.pixels.size());
    if (total == 0) return 0;
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[static_cast<std::size_t>(i)]);

    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int threshold = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += static_cast<double>(hist[static_cast<std::size_t>(t)]);
        sum0 += t * static_cast<double>(hist[static_cast<std::size_t>(t)]);
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            threshold = t;
        }
    }
    return threshold;
}

std::vector<Component> connected_components(const std::vector<std::uint8_t>& mask, int width, int height) {
    std::vector<int> label(mask.size(), -1);
    std::vector<Component> out;
    std::vector<int> stack;
    for (int y0 = 0; y0 < height; ++y0) {
        for (int x0 = 0; x0 < width; ++x0) {
            const std::size_t start = static_cast<std::size_t>(y0) * width + x0;
            if (!mask[start] || label[start] >= 0) continue;
            const int id = static_cast<int>(out.size());
            Component c{x0, x0, y0, y0, 0};
            label[start] = id;
            stack.assign(1, static_cast<int>(start));
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                const int x = idx % width;
                const int y = idx / width;
                ++c.area;
                c.left = std::min(c.left, x);
                c.right = std::max(c.right, x);
                c.top = std::min(c.top, y);
                c.bottom = std::max(c.bottom, y);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * width + nx;
                        if (mask[n] && label[n] < 0) {
                            label[n] = id;
                            stack.push_back(static_cast<int>(n));
                        }
                    }
                }
            }
            out.push_back(c);
        }
    }
    return out;
}

std::vector<Component> merge_overlapping(const std::vector<Component>& components, double ratio) {
    const std::size_t n = components.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = components[i];
            const auto& b = components[j];
            const int overlap = std::min(a.right, b.right) - std::max(a.left, b.left) + 1;
            const int narrower = std::min(a.right - a.left + 1, b.right - b.left + 1);
            if (overlap > 0 && overlap >= ratio * narrower) parent[find(i)] = find(j);
        }
    }
    std::vector<Component> merged;
    std::vector<int> slot(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<int>(merged.size());
            merged.push_back(components[i]);
            continue;
        }
        auto& m = merged[static_cast<std::size_t>(slot[r])];
        const auto& c = components[i];
        m.left = std::min(m.left, c.left);
        m.right = std::max(m.right, c.right);
        m.top = std::min(m.top, c.top);
        m.bottom = std::max(m.bottom, c.bottom);
        m.area += c.area;
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.left < b.left; });
    return merged;
}

Segmentation segment(const Raster& image) {
    Segmentation s;
    if (image.pixels.empty()) return s;
    s.threshold = otsu_threshold(image);
    std::vector<std::uint8_t> mask(image.pixels.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = image.pixels[i] <= s.threshold ? 1 : 0;

    std::vector<int> rows(static_cast<std::size_t>(image.height), 0);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) rows[static_cast<std::size_t>(y)] += mask[static_cast<std::size_t>(y) * image.width + x];
    // A thick headline gives a plateau of near-equal rows; take the plateau centre.
    const int peak = static_cast<int>(std::max_element(rows.begin(), rows.end()) - rows.begin());
    const int cut = static_cast<int>(std::ceil(0.95 * rows[static_cast<std::size_t>(peak)]));
    int top = peak;
    int bottom = peak;
    while (top > 0 && rows[static_cast<std::size_t>(top - 1)] >= cut) --top;
    while (bottom + 1 < image.height && rows[static_cast<std::size_t>(bottom + 1)] >= cut) ++bottom;
    s.headline_row = (top + bottom) / 2;
    for (int y = std::max(0, s.headline_row - 2); y <= std::min(image.height - 1, s.headline_row + 2); ++y)
        std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(y) * image.width, image.width, std::uint8_t{0});

    const auto components = connected_components(mask, image.width, image.height);
    s.raw_components = static_cast<int>(components.size());
    s.segments = static_cast<int>(merge_overlapping(components).size());
    return s;
}

Segmentation segment_png(std::span<const std::uint8_t> png_bytes) { return segment(decode_png(png_bytes)); }

}  // namespace deva::attack
