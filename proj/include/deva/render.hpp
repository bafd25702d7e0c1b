#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deva/image.hpp"
#include "deva/script.hpp"

namespace deva {

class FontLoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingGlyph : public std::runtime_error {
public:
    explicit MissingGlyph(std::u32string codepoints);
    const std::u32string& codepoints() const noexcept { return codepoints_; }

private:
    std::u32string codepoints_;
};

class CanvasOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Glyph bounding box in font units, y up.
struct GlyphBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

/// An immutable TrueType face. Copies share the underlying bytes.
class FontFace {
public:
    static FontFace load(const std::filesystem::path& path);
    static FontFace from_bytes(std::vector<std::uint8_t> bytes, std::string name);

    const std::string& name() const noexcept;

    /// 0 when the face has no glyph for cp.
    int glyph_index(char32_t cp) const;
    int advance(int glyph) const;  // font units
    GlyphBox box(int glyph) const;

    /// Pixels per font unit for an em of `em_px` pixels.
    float scale_for_em(float em_px) const;

    int ascent() const noexcept;
    int descent() const noexcept;  // negative
    int units_per_em() const noexcept;
    /// Shirorekha band measured on the face's KA glyph, font units, y up.
    float headline_top() const noexcept;
    float headline_bottom() const noexcept;

    /// Antialiased coverage bitmap of one glyph. Pen position is (pen_x, pen_y) in pixels,
    /// y down; returns the bitmap origin through x0/y0.
    std::vector<std::uint8_t> glyph_bitmap(int glyph, float scale_x, float scale_y, float pen_x, float pen_y,
                                           int& x0, int& y0, int& w, int& h) const;

    struct Impl;

private:
    explicit FontFace(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

/// Per-cluster styling hooks used by layout-stage obfuscation.
struct ClusterStyle {
    int face = 0;
    float size_scale = 1.0f;
    float scale_x = 1.0f;  // stretch (>1) / compress (<1)
    float scale_y = 1.0f;
    float spacing_after = 0.0f;  // px added to the pen after this cluster; negative overlaps
};

struct PlacedGlyph {
    int face = 0;
    int glyph = 0;
    char32_t codepoint = 0;
    float x = 0.0f;  // px from the cluster origin
    float y = 0.0f;  // px from the baseline, y down
    float scale_x = 1.0f;
    float scale_y = 1.0f;
    float ink = 1.0f;  // 1 = solid
};

/// One cluster's glyphs. The base glyph sits at x = 0; a left matra has negative x.
struct GlyphPlacement {
    std::size_t cluster = 0;
    std::size_t word = 0;
    std::vector<PlacedGlyph> glyphs;
    float origin_x = 0.0f;  // px from the text start
    float dy = 0.0f;        // baseline shift, px
    float advance = 0.0f;   // px
    float em_px = 48.0f;
    float ink_left = 0.0f;   // px relative to origin
    float ink_right = 0.0f;  // px relative to origin
    float headline_y = 0.0f;          // centre of the shirorekha, px from baseline (negative = up)
    float headline_thickness = 0.0f;  // px
};

/// Rows of the three strips. Relative to the glyph box from shape(), canvas rows after rasterize.
struct StripMetrics {
    int top_height = 0;
    int core_height = 0;
    int bottom_height = 0;
    int headline_row = 0;
};

/// A free-form ink polyline in text space (x from text start, y from baseline).
struct Stroke {
    std::vector<std::pair<float, float>> points;
    float width = 2.0f;
    float ink = 1.0f;
};

struct ShapedText {
    std::vector<GlyphPlacement> placements;
    std::vector<Stroke> strokes;
    StripMetrics metrics;
    float em_px = 48.0f;
    bool headline = true;
};

struct CanvasConfig {
    int height = 100;
    int padding = 20;  // total horizontal padding
    int min_width = 120;
    int max_width = 800;
    int min_height = 60;
    int max_height = 200;
};

struct RenderConfig {
    float font_size = 48.0f;  // em size in px
    CanvasConfig canvas;
};

/// Where shaped text lands on a canvas.
struct CanvasFrame {
    int width = 0;
    int height = 0;
    float text_x = 0.0f;    // canvas x of text-space x = 0
    float baseline = 0.0f;  // canvas row of the baseline
    StripMetrics metrics;   // canvas rows
    int ink_left = 0;       // canvas columns spanned by glyph ink
    int ink_right = 0;
};

class Renderer {
public:
    Renderer(std::vector<FontFace> faces, RenderConfig config = {});
    static Renderer from_files(std::span<const std::filesystem::path> paths, RenderConfig config = {});

    const std::vector<FontFace>& faces() const noexcept { return faces_; }
    const RenderConfig& config() const noexcept { return config_; }

    /// Throws MissingGlyph listing every uncovered codepoint (across all faces).
    void check_coverage(const ChallengeText& text) const;

    /// Simplified Devanagari shaping. `styles` is empty or has one entry per cluster;
    /// `em_px` <= 0 means the configured font size.
    ShapedText shape(const ChallengeText& text, std::span<const ClusterStyle> styles = {}, float em_px = 0.0f) const;

    /// Throws CanvasOverflow when the text does not fit the maximum width.
    CanvasFrame frame(const ShapedText& shaped) const;
    Raster rasterize(const ShapedText& shaped) const;
    Raster render(const ChallengeText& text) const { return rasterize(shape(text)); }

    /// Largest font size (stepping down by 4 px, not below 24) whose layout fits the canvas.
    ShapedText shape_to_fit(const ChallengeText& text, std::span<const ClusterStyle> styles = {}) const;

private:
    GlyphPlacement shape_cluster(const Cluster& cluster, const ClusterStyle& style, float em_px) const;

    std::vector<FontFace> faces_;
    RenderConfig config_;
};

/// Directory of the bundled fonts and sample corpus, set at build time.
std::filesystem::path default_asset_dir();
std::vector<std::filesystem::path> default_font_paths();

}  // namespace deva
