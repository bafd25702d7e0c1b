#include <doctest.h>

#include <algorithm>

#include "deva/image.hpp"
#include "deva/render.hpp"
#include "support.hpp"

using namespace deva;

namespace {

int argmax_row(const Raster& r) {
    const auto profile = row_ink_profile(r);
    return static_cast<int>(std::max_element(profile.begin(), profile.end()) - profile.begin());
}

int ink_width(const Raster& r) {
    const auto [a, b] = ink_column_span(r);
    return a < 0 ? 0 : b - a + 1;
}

}  // namespace

TEST_CASE("bundled fonts load and cover the generator sets") {
    const Renderer& r = testing::renderer();
    REQUIRE(!r.faces().empty());
    std::u32string all = std::u32string(simple_consonants()) + std::u32string(simple_vowels());
    for (char32_t m : simple_matras()) all += std::u32string(U"क") + m;
    for (char32_t d = 0x0966; d <= 0x096F; ++d) all.push_back(d);
    CHECK_NOTHROW(r.check_coverage(make_challenge_text(u32_to_utf8(all))));
}

TEST_CASE("font loading errors") {
    CHECK_THROWS_AS(FontFace::load("/nonexistent/font.ttf"), FontLoadError);
    CHECK_THROWS_AS(FontFace::from_bytes({1, 2, 3, 4}, "junk"), FontLoadError);
}

TEST_CASE("shape of a single consonant") {
    const ShapedText s = testing::renderer().shape(make_challenge_text("क"));
    REQUIRE(s.placements.size() == 1);
    CHECK(s.placements[0].advance > 0.0f);
}

TEST_CASE("left matra is placed before its base") {
    const ShapedText s = testing::renderer().shape(make_challenge_text("कि"));
    REQUIRE(s.placements.size() == 1);
    const auto& glyphs = s.placements[0].glyphs;
    const auto base = std::find_if(glyphs.begin(), glyphs.end(), [](const PlacedGlyph& g) { return g.codepoint == U'क'; });
    const auto matra = std::find_if(glyphs.begin(), glyphs.end(), [](const PlacedGlyph& g) { return g.codepoint == U'ि'; });
    REQUIRE(base != glyphs.end());
    REQUIRE(matra != glyphs.end());
    CHECK(matra->x < base->x);

    // The matra's stem sits left of where the bare consonant's ink starts.
    const Raster ki = testing::renderer().render(make_challenge_text("कि"));
    const Raster ka = testing::renderer().render(make_challenge_text("क"));
    CHECK(ink_width(ki) > ink_width(ka));
}

TEST_CASE("placements are ordered left to right") {
    const ShapedText s = testing::renderer().shape(make_challenge_text("कर्मणि योग"));
    REQUIRE(s.placements.size() == 5);
    for (std::size_t i = 1; i < s.placements.size(); ++i) {
        CHECK(s.placements[i].cluster == i);
        CHECK(s.placements[i].origin_x > s.placements[i - 1].origin_x);
    }
    CHECK(s.placements[3].word == 1);
}

TEST_CASE("strip metrics partition the glyph box") {
    const Renderer& r = testing::renderer();
    const ShapedText s = r.shape(make_challenge_text("कर्मणि"));
    const StripMetrics& m = s.metrics;
    CHECK(m.top_height > 0);
    CHECK(m.core_height > 0);
    CHECK(m.bottom_height > 0);
    CHECK(std::abs(m.headline_row - m.top_height) <= 1);
    const FontFace& f = r.faces()[0];
    const float scale = f.scale_for_em(s.em_px);
    const float box = static_cast<float>(f.ascent() - f.descent()) * scale;
    CHECK(std::abs(m.top_height + m.core_height + m.bottom_height - box) <= 1.0f);
}

TEST_CASE("missing glyphs are reported") {
    const Renderer& r = testing::renderer();
    ChallengeText t = make_challenge_text("क");
    t.clusters[0].codepoints = U"\U000E0001";
    try {
        r.check_coverage(t);
        FAIL_CHECK("expected MissingGlyph");
    } catch (const MissingGlyph& e) {
        CHECK(e.codepoints() == U"\U000E0001");
    }
}

TEST_CASE("rendering is deterministic") {
    const Renderer& r = testing::renderer();
    for (const char* w : {"कर्मणि", "क्षेत्र", "१२३", "ऋषि"}) {
        const Raster a = r.render(make_challenge_text(w));
        const Raster b = Renderer::from_files(default_font_paths()).render(make_challenge_text(w));
        CHECK(a == b);
        CHECK(encode_png(a) == encode_png(b));
    }
}

TEST_CASE("karmani coverage is within the usability window") {
    const Raster r = testing::renderer().render(make_challenge_text("कर्मणि"));
    const double c = ink_coverage(r);
    CHECK(c > 0.02);
    CHECK(c < 0.6);
}

TEST_CASE("canvas bounds and coverage over corpus words") {
    const Renderer& r = testing::renderer();
    const CanvasConfig& cc = r.config().canvas;
    for (const auto& w : testing::sample_words()) {
        const Raster img = r.rasterize(r.shape_to_fit(make_challenge_text(w)));
        CHECK((img.width >= cc.min_width && img.width <= cc.max_width));
        CHECK((img.height >= cc.min_height && img.height <= cc.max_height));
        const double c = ink_coverage(img);
        CHECK((c > 0.0 && c <= 0.6));
    }
}

TEST_CASE("headline is the row of maximum projection") {
    const Renderer& r = testing::renderer();
    for (const auto& w : testing::multi_cluster_words()) {
        const ShapedText s = r.shape(make_challenge_text(w));
        const CanvasFrame f = r.frame(s);
        const Raster img = r.rasterize(s);
        CHECK_MESSAGE(std::abs(argmax_row(img) - f.metrics.headline_row) <= 2, w);
    }
}

TEST_CASE("clean headline prominence is at least 3x") {
    const Renderer& r = testing::renderer();
    int below = 0;
    for (const auto& w : testing::multi_cluster_words()) {
        const double p = headline_prominence(r.render(make_challenge_text(w)));
        below += p < 3.0;
        CHECK_MESSAGE(p >= 3.0, w << " prominence " << p);
    }
    MESSAGE(below << " words below 3x");
}

TEST_CASE("adding a cluster never decreases ink width") {
    const Renderer& r = testing::renderer();
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        const ChallengeText full = random_string(rng, 8);
        int prev = 0;
        std::string prefix;
        for (const auto& c : full.clusters) {
            prefix += c.utf8();
            const int w = ink_width(r.render(make_challenge_text(prefix)));
            CHECK_MESSAGE(w >= prev, prefix);
            prev = w;
        }
    }
}

TEST_CASE("text too wide for the canvas overflows") {
    const Renderer& r = testing::renderer();
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "क्ष";
    const ChallengeText t = make_challenge_text(long_text);
    CHECK_THROWS_AS(r.frame(r.shape(t)), CanvasOverflow);
    CHECK_THROWS_AS(r.shape_to_fit(t), CanvasOverflow);
}

TEST_CASE("shape_to_fit steps the size down until it fits") {
    const Renderer& r = testing::renderer();
    std::string text;
    for (int i = 0; i < 14; ++i) text += "क";
    const ChallengeText t = make_challenge_text(text);
    const ShapedText s = r.shape_to_fit(t);
    CHECK(s.em_px <= 48.0f);
    CHECK(s.em_px >= 24.0f);
    CHECK_NOTHROW(r.frame(s));
}

TEST_CASE("png round trip") {
    const Raster img = testing::renderer().render(make_challenge_text("योग"));
    const auto png = encode_png(img);
    CHECK(decode_png(png) == img);
    CHECK(encode_png(decode_png(png)) == png);
    CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), PngError);
}
