#include "deva/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

#define STB_TRUETYPE_IMPLEMENTATION
#define STBTT_STATIC
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wunused-function"
#include "stb_truetype.h"
#pragma GCC diagnostic pop

#ifndef DEVA_ASSET_DIR
#define DEVA_ASSET_DIR "assets"
#endif

namespace deva {

MissingGlyph::MissingGlyph(std::u32string codepoints)
    : std::runtime_error([&] {
          std::string msg = "font has no glyph for";
          char buf[16];
          for (char32_t cp : codepoints) {
              std::snprintf(buf, sizeof buf, " U+%04X", static_cast<unsigned>(cp));
              msg += buf;
          }
          return msg;
      }()),
      codepoints_(std::move(codepoints)) {}

struct FontFace::Impl {
    std::vector<std::uint8_t> bytes;
    stbtt_fontinfo info{};
    std::string name;
    int ascent = 0;
    int descent = 0;
    int units_per_em = 1000;
    float headline_top = 0.0f;
    float headline_bottom = 0.0f;
};

namespace {

// Measure the shirorekha on KA: the densest pixel row and its neighbours within 85% of it.
void measure_headline(FontFace::Impl& f) {
    const int ka = stbtt_FindGlyphIndex(&f.info, 0x0915);
    if (ka == 0) throw FontLoadError("font '" + f.name + "' has no Devanagari KA glyph");
    const float scale = stbtt_ScaleForMappingEmToPixels(&f.info, 400.0f);
    int w = 0, h = 0, xoff = 0, yoff = 0;
    unsigned char* bmp = stbtt_GetGlyphBitmap(&f.info, scale, scale, ka, &w, &h, &xoff, &yoff);
    if (!bmp || w <= 0 || h <= 0) throw FontLoadError("font '" + f.name + "' KA glyph is empty");
    std::vector<int> rows(static_cast<std::size_t>(h), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (bmp[y * w + x] >= 128) ++rows[static_cast<std::size_t>(y)];
    stbtt_FreeBitmap(bmp, nullptr);
    const auto peak_it = std::max_element(rows.begin(), rows.end());
    const int peak = static_cast<int>(peak_it - rows.begin());
    const int cut = static_cast<int>(0.85 * *peak_it);
    int top = peak;
    int bottom = peak;
    while (top > 0 && rows[static_cast<std::size_t>(top - 1)] >= cut) --top;
    while (bottom + 1 < h && rows[static_cast<std::size_t>(bottom + 1)] >= cut) ++bottom;
    f.headline_top = -static_cast<float>(yoff + top) / scale;
    f.headline_bottom = -static_cast<float>(yoff + bottom + 1) / scale;
}

bool is_mark(char32_t cp) {
    const auto c = classify(cp);
    switch (c.kind) {
        case ClassKind::Nukta:
        case ClassKind::Virama: return true;
        case ClassKind::CombiningSign: return cp != 0x0903;  // visarga spaces
        case ClassKind::DependentVowelSign:
            return c.position == MatraPosition::Above || c.position == MatraPosition::Below;
        default: return false;
    }
}

bool is_left_matra(char32_t cp) {
    const auto c = classify(cp);
    return c.kind == ClassKind::DependentVowelSign && c.position == MatraPosition::Left;
}

}  // namespace

FontFace FontFace::from_bytes(std::vector<std::uint8_t> bytes, std::string name) {
    auto impl = std::make_shared<Impl>();
    impl->bytes = std::move(bytes);
    impl->name = std::move(name);
    const int offset = stbtt_GetFontOffsetForIndex(impl->bytes.data(), 0);
    if (impl->bytes.size() < 12 || offset < 0 || !stbtt_InitFont(&impl->info, impl->bytes.data(), offset))
        throw FontLoadError("cannot parse font '" + impl->name + "'");
    int line_gap = 0;
    stbtt_GetFontVMetrics(&impl->info, &impl->ascent, &impl->descent, &line_gap);
    impl->units_per_em = static_cast<int>(std::lround(1.0f / stbtt_ScaleForMappingEmToPixels(&impl->info, 1.0f)));
    measure_headline(*impl);
    return FontFace(std::move(impl));
}

FontFace FontFace::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FontLoadError("cannot open font file " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return from_bytes(std::move(bytes), path.filename().string());
}

const std::string& FontFace::name() const noexcept { return impl_->name; }
int FontFace::ascent() const noexcept { return impl_->ascent; }
int FontFace::descent() const noexcept { return impl_->descent; }
int FontFace::units_per_em() const noexcept { return impl_->units_per_em; }
float FontFace::headline_top() const noexcept { return impl_->headline_top; }
float FontFace::headline_bottom() const noexcept { return impl_->headline_bottom; }

int FontFace::glyph_index(char32_t cp) const { return stbtt_FindGlyphIndex(&impl_->info, static_cast<int>(cp)); }

int FontFace::advance(int glyph) const {
    int adv = 0, lsb = 0;
    stbtt_GetGlyphHMetrics(&impl_->info, glyph, &adv, &lsb);
    return adv;
}

GlyphBox FontFace::box(int glyph) const {
    GlyphBox b;
    if (!stbtt_GetGlyphBox(&impl_->info, glyph, &b.x0, &b.y0, &b.x1, &b.y1)) return {};
    return b;
}

float FontFace::scale_for_em(float em_px) const { return stbtt_ScaleForMappingEmToPixels(&impl_->info, em_px); }

std::vector<std::uint8_t> FontFace::glyph_bitmap(int glyph, float scale_x, float scale_y, float pen_x, float pen_y,
                                                 int& x0, int& y0, int& w, int& h) const {
    const float fx = std::floor(pen_x);
    const float fy = std::floor(pen_y);
    const float sub_x = pen_x - fx;
    const float sub_y = pen_y - fy;
    int ix0 = 0, iy0 = 0, ix1 = 0, iy1 = 0;
    stbtt_GetGlyphBitmapBoxSubpixel(&impl_->info, glyph, scale_x, scale_y, sub_x, sub_y, &ix0, &iy0, &ix1, &iy1);
    w = ix1 - ix0;
    h = iy1 - iy0;
    x0 = static_cast<int>(fx) + ix0;
    y0 = static_cast<int>(fy) + iy0;
    if (w <= 0 || h <= 0) {
        w = h = 0;
        return {};
    }
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    stbtt_MakeGlyphBitmapSubpixel(&impl_->info, out.data(), w, h, w, scale_x, scale_y, sub_x, sub_y, glyph);
    return out;
}

Renderer::Renderer(std::vector<FontFace> faces, RenderConfig config)
    : faces_(std::move(faces)), config_(config) {
    if (faces_.empty()) throw FontLoadError("renderer needs at least one font");
}

Renderer Renderer::from_files(std::span<const std::filesystem::path> paths, RenderConfig config) {
    std::vector<FontFace> faces;
    for (const auto& p : paths) faces.push_back(FontFace::load(p));
    return Renderer(std::move(faces), config);
}

void Renderer::check_coverage(const ChallengeText& text) const {
    std::u32string missing;
    for (const auto& cluster : text.clusters)
        for (char32_t cp : cluster.codepoints)
            for (const auto& face : faces_)
                if (face.glyph_index(cp) == 0 && missing.find(cp) == std::u32string::npos) missing.push_back(cp);
    if (!missing.empty()) throw MissingGlyph(std::move(missing));
}

GlyphPlacement Renderer::shape_cluster(const Cluster& cluster, const ClusterStyle& style, float em_px) const {
    const FontFace& face = faces_[static_cast<std::size_t>(style.face) % faces_.size()];
    const int face_index = static_cast<int>(static_cast<std::size_t>(style.face) % faces_.size());
    const float em = em_px * style.size_scale;
    const float scale = face.scale_for_em(em);
    const float sx = scale * style.scale_x;
    const float sy = scale * style.scale_y;

    GlyphPlacement gp;
    gp.em_px = em;

    const auto make = [&](char32_t cp, float x) {
        PlacedGlyph g;
        g.face = face_index;
        g.glyph = face.glyph_index(cp);
        g.codepoint = cp;
        g.x = x;
        g.scale_x = style.scale_x;
        g.scale_y = style.scale_y;
        return g;
    };

    float pen = 0.0f;
    char32_t left_matra = 0;
    for (char32_t cp : cluster.codepoints)
        if (is_left_matra(cp)) left_matra = cp;
    if (left_matra != 0) {
        gp.glyphs.push_back(make(left_matra, pen));
        pen += static_cast<float>(face.advance(gp.glyphs.back().glyph)) * sx;
    }
    const float base_x = pen;

    std::ptrdiff_t anchor = -1;
    for (char32_t cp : cluster.codepoints) {
        if (cp == left_matra) continue;
        if (is_mark(cp) && anchor >= 0) {
            PlacedGlyph m = make(cp, 0.0f);
            const PlacedGlyph& a = gp.glyphs[static_cast<std::size_t>(anchor)];
            const GlyphBox ab = face.box(a.glyph);
            const GlyphBox mb = face.box(m.glyph);
            const float anchor_centre = a.x + 0.5f * static_cast<float>(ab.x0 + ab.x1) * sx;
            const float mark_centre = 0.5f * static_cast<float>(mb.x0 + mb.x1) * sx;
            m.x = mb.empty() ? pen : anchor_centre - mark_centre;
            gp.glyphs.push_back(m);
            continue;
        }
        gp.glyphs.push_back(make(cp, pen));
        anchor = static_cast<std::ptrdiff_t>(gp.glyphs.size() - 1);
        pen += static_cast<float>(face.advance(gp.glyphs.back().glyph)) * sx;
    }

    float left = 0.0f;
    float right = 0.0f;
    bool any = false;
    for (auto& g : gp.glyphs) {
        g.x -= base_x;
        const GlyphBox b = face.box(g.glyph);
        if (b.empty()) continue;
        const float l = g.x + static_cast<float>(b.x0) * sx;
        const float r = g.x + static_cast<float>(b.x1) * sx;
        left = any ? std::min(left, l) : l;
        right = any ? std::max(right, r) : r;
        any = true;
    }
    gp.ink_left = any ? left : -base_x;
    gp.ink_right = any ? right : pen - base_x;
    gp.advance = pen;
    gp.origin_x = base_x;  // lead; made absolute by the caller
    gp.headline_y = -0.5f * (face.headline_top() + face.headline_bottom()) * sy;
    gp.headline_thickness = (face.headline_top() - face.headline_bottom()) * sy;
    return gp;
}

ShapedText Renderer::shape(const ChallengeText& text, std::span<const ClusterStyle> styles, float em_px) const {
    if (!styles.empty() && styles.size() != text.clusters.size())
        throw std::invalid_argument("one cluster style per cluster required");
    const float em = em_px > 0.0f ? em_px : config_.font_size;

    std::u32string missing;
    for (std::size_t i = 0; i < text.clusters.size(); ++i) {
        const int f = styles.empty() ? 0 : styles[i].face;
        const FontFace& face = faces_[static_cast<std::size_t>(f) % faces_.size()];
        for (char32_t cp : text.clusters[i].codepoints)
            if (face.glyph_index(cp) == 0 && missing.find(cp) == std::u32string::npos) missing.push_back(cp);
    }
    if (!missing.empty()) throw MissingGlyph(std::move(missing));

    ShapedText out;
    out.em_px = em;
    const FontFace& primary = faces_.front();
    const float scale = primary.scale_for_em(em);
    const int space = primary.glyph_index(U' ');
    const float word_gap = space != 0 ? static_cast<float>(primary.advance(space)) * scale : 0.3f * em;

    std::vector<std::size_t> word_of;
    for (std::size_t w = 0; w < text.word_sizes.size(); ++w)
        for (std::size_t k = 0; k < text.word_sizes[w]; ++k) word_of.push_back(w);
    word_of.resize(text.clusters.size(), word_of.empty() ? 0 : word_of.back());

    float pen = 0.0f;
    const ClusterStyle plain{};
    for (std::size_t i = 0; i < text.clusters.size(); ++i) {
        const ClusterStyle& style = styles.empty() ? plain : styles[i];
        if (i > 0 && word_of[i] != word_of[i - 1]) pen += word_gap;
        GlyphPlacement gp = shape_cluster(text.clusters[i], style, em);
        gp.cluster = i;
        gp.word = word_of[i];
        const float lead = gp.origin_x;
        gp.origin_x = pen + lead;
        pen += gp.advance + style.spacing_after;
        out.placements.push_back(std::move(gp));
    }

    const float asc = static_cast<float>(primary.ascent()) * scale;
    const float desc = -static_cast<float>(primary.descent()) * scale;
    const float head = -0.5f * (primary.headline_top() + primary.headline_bottom()) * scale;
    const int total = static_cast<int>(std::lround(asc + desc));
    out.metrics.top_height = static_cast<int>(std::lround(asc + head));
    out.metrics.core_height = static_cast<int>(std::lround(-head));
    out.metrics.bottom_height = total - out.metrics.top_height - out.metrics.core_height;
    out.metrics.headline_row = out.metrics.top_height;
    return out;
}

CanvasFrame Renderer::frame(const ShapedText& shaped) const {
    const CanvasConfig& cc = config_.canvas;
    float left = 0.0f;
    float right = 0.0f;
    bool any = false;
    const auto extend = [&](float l, float r) {
        left = any ? std::min(left, l) : l;
        right = any ? std::max(right, r) : r;
        any = true;
    };
    for (const auto& p : shaped.placements) extend(p.origin_x + p.ink_left, p.origin_x + p.ink_right);
    for (const auto& s : shaped.strokes)
        for (const auto& [x, y] : s.points) extend(x - s.width / 2, x + s.width / 2);
    if (!any) throw std::invalid_argument("nothing to rasterize");

    const float extent = right - left;
    CanvasFrame f;
    const int needed = static_cast<int>(std::ceil(extent)) + cc.padding;
    if (needed > cc.max_width)
        throw CanvasOverflow("text needs " + std::to_string(needed) + " px, canvas allows " +
                             std::to_string(cc.max_width));
    f.width = std::max(needed, cc.min_width);
    f.height = std::clamp(cc.height, cc.min_height, cc.max_height);
    f.text_x = std::round(0.5f * (static_cast<float>(f.width) - extent) - left);

    const FontFace& primary = faces_.front();
    const float scale = primary.scale_for_em(shaped.em_px);
    const float asc = static_cast<float>(primary.ascent()) * scale;
    const float desc = -static_cast<float>(primary.descent()) * scale;
    const float head = -0.5f * (primary.headline_top() + primary.headline_bottom()) * scale;
    f.baseline = std::round(0.5f * (static_cast<float>(f.height) - (asc + desc)) + asc);
    const int box_top = static_cast<int>(std::lround(f.baseline - asc));
    const int box_bottom = static_cast<int>(std::lround(f.baseline + desc));
    f.metrics.headline_row = static_cast<int>(std::lround(f.baseline + head));
    f.metrics.top_height = f.metrics.headline_row - box_top;
    f.metrics.core_height = static_cast<int>(f.baseline) - f.metrics.headline_row;
    f.metrics.bottom_height = box_bottom - static_cast<int>(f.baseline);
    f.ink_left = static_cast<int>(std::floor(f.text_x + left));
    f.ink_right = static_cast<int>(std::ceil(f.text_x + right));
    return f;
}

namespace {

void fill_span(std::vector<float>& cov, int width, int height, float x0, float x1, float y0, float y1, float ink) {
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int yb = std::min(height - 1, static_cast<int>(std::ceil(y1)) - 1);
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int xb = std::min(width - 1, static_cast<int>(std::ceil(x1)) - 1);
    for (int y = ya; y <= yb; ++y) {
        const float vy = std::min(y1, static_cast<float>(y + 1)) - std::max(y0, static_cast<float>(y));
        for (int x = xa; x <= xb; ++x) {
            const float vx = std::min(x1, static_cast<float>(x + 1)) - std::max(x0, static_cast<float>(x));
            float& c = cov[static_cast<std::size_t>(y) * width + x];
            c = std::max(c, std::clamp(vx, 0.0f, 1.0f) * std::clamp(vy, 0.0f, 1.0f) * ink);
        }
    }
}

void draw_segment(std::vector<float>& cov, int width, int height, float ax, float ay, float bx, float by,
                  float stroke, float ink) {
    const float r = stroke / 2.0f;
    const int xa = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r - 1)));
    const int xb = std::min(width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r + 1)));
    const int ya = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r - 1)));
    const int yb = std::min(height - 1, static_cast<int>(std::ceil(std::max(ay, by) + r + 1)));
    const float dx = bx - ax;
    const float dy = by - ay;
    const float len2 = dx * dx + dy * dy;
    for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
            const float px = static_cast<float>(x) + 0.5f;
            const float py = static_cast<float>(y) + 0.5f;
            float t = len2 > 0.0f ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0f;
            t = std::clamp(t, 0.0f, 1.0f);
            const float qx = ax + t * dx - px;
            const float qy = ay + t * dy - py;
            const float d = std::sqrt(qx * qx + qy * qy);
            const float v = std::clamp(r + 0.5f - d, 0.0f, 1.0f) * ink;
            float& c = cov[static_cast<std::size_t>(y) * width + x];
            c = std::max(c, v);
        }
    }
}

}  // namespace

Raster Renderer::rasterize(const ShapedText& shaped) const {
    if (shaped.placements.empty()) throw std::invalid_argument("nothing to rasterize");
    const CanvasFrame f = frame(shaped);
    std::vector<float> cov(static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height), 0.0f);

    for (const auto& p : shaped.placements) {
        for (const auto& g : p.glyphs) {
            const FontFace& face = faces_[static_cast<std::size_t>(g.face) % faces_.size()];
            const float scale = face.scale_for_em(p.em_px);
            int x0 = 0, y0 = 0, w = 0, h = 0;
            const auto bmp = face.glyph_bitmap(g.glyph, scale * g.scale_x, scale * g.scale_y,
                                               f.text_x + p.origin_x + g.x, f.baseline + p.dy + g.y, x0, y0, w, h);
            for (int y = 0; y < h; ++y) {
                const int cy = y0 + y;
                if (cy < 0 || cy >= f.height) continue;
                for (int x = 0; x < w; ++x) {
                    const int cx = x0 + x;
                    if (cx < 0 || cx >= f.width) continue;
                    float& c = cov[static_cast<std::size_t>(cy) * f.width + cx];
                    c = std::max(c, static_cast<float>(bmp[static_cast<std::size_t>(y) * w + x]) / 255.0f * g.ink);
                }
            }
        }
    }

    if (shaped.headline) {
        const auto& ps = shaped.placements;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto& p = ps[i];
            const float xa = f.text_x + p.origin_x + p.ink_left;
            const bool joins_next = i + 1 < ps.size() && ps[i + 1].word == p.word;
            const float xb = joins_next ? f.text_x + ps[i + 1].origin_x + ps[i + 1].ink_left
                                        : f.text_x + p.origin_x + p.ink_right;
            const float yc = f.baseline + p.dy + p.headline_y;
            const float half = p.headline_thickness / 2.0f;
            fill_span(cov, f.width, f.height, std::min(xa, xb), std::max(xa, xb), yc - half, yc + half, 1.0f);
        }
    }

    for (const auto& s : shaped.strokes)
        for (std::size_t k = 1; k < s.points.size(); ++k)
            draw_segment(cov, f.width, f.height, f.text_x + s.points[k - 1].first, f.baseline + s.points[k - 1].second,
                         f.text_x + s.points[k].first, f.baseline + s.points[k].second, s.width, s.ink);

    Raster out(f.width, f.height);
    for (std::size_t i = 0; i < cov.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(255 - std::lround(255.0f * std::min(cov[i], 1.0f)));
    return out;
}

ShapedText Renderer::shape_to_fit(const ChallengeText& text, std::span<const ClusterStyle> styles) const {
    for (float em = config_.font_size;; em -= 4.0f) {
        ShapedText shaped = shape(text, styles, em);
        try {
            (void)frame(shaped);
            return shaped;
        } catch (const CanvasOverflow&) {
            if (em - 4.0f < 24.0f) throw;
        }
    }
}

std::filesystem::path default_asset_dir() {
    if (const char* env = std::getenv("DEVA_ASSET_DIR"); env && *env) return env;
    return DEVA_ASSET_DIR;
}

std::vector<std::filesystem::path> default_font_paths() {
    const auto dir = default_asset_dir() / "fonts";
    return {dir / "NotoSansDevanagari-Regular.ttf", dir / "NotoSansDevanagari-Bold.ttf",
            dir / "NotoSerifDevanagari-Regular.ttf"};
}

}  // namespace deva
