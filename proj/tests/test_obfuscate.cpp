#include <doctest.h>

#include <set>

#include "deva/attack.hpp"
#include "deva/obfuscate.hpp"
#include "support.hpp"

using namespace deva;

namespace {

std::vector<TransformInstance> family_instances(const TransformRegistry& reg, TransformFamily f) {
    std::vector<TransformInstance> out;
    for (const auto& i : reg.instances)
        if (i.family == f) out.push_back(i);
    return out;
}

std::vector<std::size_t> indices(const std::vector<TransformInstance>& subset) {
    std::vector<std::size_t> out;
    for (const auto& i : subset) out.push_back(i.index);
    return out;
}

// Widest horizontal extent of an 8-connected ink path confined to rows [top, bottom].
int widest_path_in_rows(const Raster& r, int top, int bottom) {
    top = std::max(0, top);
    bottom = std::min(r.height - 1, bottom);
    const int h = bottom - top + 1;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(r.width) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < r.width; ++x) mask[static_cast<std::size_t>(y) * r.width + x] = r.at(x, y + top) < 128;
    int best = 0;
    for (const auto& c : attack::connected_components(mask, r.width, h)) best = std::max(best, c.right - c.left + 1);
    return best;
}

const TransformRegistry& default_registry() {
    static const TransformRegistry reg = build_registry(RegistryConfig::defaults());
    return reg;
}

}  // namespace

TEST_CASE("default registry has 64 instances covering all families") {
    const TransformRegistry& reg = default_registry();
    CHECK(reg.size() == 64);
    CHECK(reg.size() >= kMinRegistrySize);
    CHECK(reg.size() <= kMaxRegistrySize);
    std::set<TransformFamily> seen;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        CHECK(reg.instances[i].index == i);
        seen.insert(reg.instances[i].family);
    }
    CHECK(seen.size() == 11);
}

TEST_CASE("family stages") {
    using F = TransformFamily;
    CHECK(stage_of(F::ConjunctBias) == Stage::Spec);
    for (F f : {F::FontVariation, F::FontSizeVariation, F::CharacterSpacing, F::BaselineAlongCurve,
                F::CharacterDistortion})
        CHECK(stage_of(f) == Stage::Layout);
    for (F f : {F::Skew, F::Noise, F::InterferingBackground, F::ShirorekhaRemoval, F::CurveThroughString})
        CHECK(stage_of(f) == Stage::Raster);
    for (F f : kAllFamilies) CHECK(family_from_string(to_string(f)) == f);
    CHECK(!family_from_string("sparkle"));
}

TEST_CASE("family variants cover the enumerated alterations") {
    const auto has = [](TransformFamily f, const char* v) {
        const auto& vs = default_family_spec(f).variants;
        return std::find(vs.begin(), vs.end(), v) != vs.end();
    };
    for (const char* v : {"mosaic", "arcs", "additive", "subtractive", "faded", "frayed"})
        CHECK(has(TransformFamily::Noise, v));
    for (const char* v : {"overlap", "shadow", "joined"}) CHECK(has(TransformFamily::CharacterSpacing, v));
    for (const char* v : {"stretch", "compress"}) CHECK(has(TransformFamily::CharacterDistortion, v));
}

TEST_CASE("declared parameter ranges") {
    const auto range = [](TransformFamily f, const char* name) {
        for (const auto& p : default_family_spec(f).params)
            if (p.name == name) return p;
        FAIL("missing parameter " << name);
        return ParamRange{};
    };
    const ParamRange skew = range(TransformFamily::Skew, "angle_deg");
    CHECK(skew.lo == -15.0);
    CHECK(skew.hi == 15.0);
    const ParamRange noise = range(TransformFamily::Noise, "density");
    CHECK(noise.lo == doctest::Approx(0.01));
    CHECK(noise.hi == doctest::Approx(0.10));
    const ParamRange curve = range(TransformFamily::CurveThroughString, "amplitude");
    CHECK(curve.lo == 2.0);
    CHECK(curve.hi == 10.0);
}

TEST_CASE("instance parameters stay within their ranges") {
    for (const auto& inst : default_registry().instances) {
        REQUIRE(inst.params.size() == inst.ranges.size());
        for (std::size_t k = 0; k < inst.params.size(); ++k) {
            const ParamRange& r = inst.ranges[k];
            CHECK(inst.params[k].first == r.name);
            CHECK(inst.params[k].second >= r.lo);
            CHECK(inst.params[k].second <= r.hi);
        }
    }
}

TEST_CASE("registry is deterministic") {
    CHECK(build_registry(RegistryConfig::defaults()) == build_registry(RegistryConfig::defaults()));
}

TEST_CASE("registry configuration errors") {
    RegistryConfig small = RegistryConfig::defaults();
    for (auto& [f, n] : small.counts) n = 3;  // 33 in total
    small.counts[TransformFamily::Noise] = 10;  // 40
    CHECK_THROWS_AS(build_registry(small), ConfigError);

    RegistryConfig big = RegistryConfig::defaults();
    big.counts[TransformFamily::Noise] = 60;
    CHECK_THROWS_AS(build_registry(big), ConfigError);

    RegistryConfig missing = RegistryConfig::defaults();
    missing.counts.erase(TransformFamily::Skew);
    missing.counts[TransformFamily::Noise] += 6;
    CHECK_THROWS_AS(build_registry(missing), ConfigError);

    RegistryConfig inverted = RegistryConfig::defaults();
    inverted.ranges[TransformFamily::Skew] = {{"angle_deg", 5.0, -5.0, 0.0}};
    CHECK_THROWS_AS(build_registry(inverted), ConfigError);

    RegistryConfig wider = RegistryConfig::defaults();
    wider.ranges[TransformFamily::Skew] = {{"angle_deg", -40.0, 40.0, 0.0}};
    CHECK_THROWS_AS(build_registry(wider), ConfigError);

    RegistryConfig unknown = RegistryConfig::defaults();
    unknown.ranges[TransformFamily::Skew] = {{"wobble", 0.0, 1.0, 0.0}};
    CHECK_THROWS_AS(build_registry(unknown), ConfigError);
}

TEST_CASE("range overrides narrow instance parameters") {
    RegistryConfig c = RegistryConfig::defaults();
    c.ranges[TransformFamily::Skew] = {{"angle_deg", -5.0, 5.0, 0.0}};
    for (const auto& inst : family_instances(build_registry(c), TransformFamily::Skew)) {
        CHECK(std::abs(inst.param("angle_deg")) <= 5.0);
        CHECK(inst.range("angle_deg").hi == 5.0);
    }
}

TEST_CASE("active subset: size, determinism, ordering") {
    const TransformRegistry& reg = default_registry();
    EpochPolicy p;
    p.rotation_seed = 42;
    const auto a = active_subset(reg, p, 0);
    CHECK(a.size() == p.m);
    CHECK(indices(a) == indices(active_subset(reg, p, 0)));
    const auto ix = indices(a);
    CHECK(std::is_sorted(ix.begin(), ix.end()));
    CHECK(std::set<std::size_t>(ix.begin(), ix.end()).size() == p.m);
}

TEST_CASE("active subset differs between epochs 0 and 1 for seed 42") {
    EpochPolicy p;
    p.rotation_seed = 42;
    CHECK(indices(active_subset(default_registry(), p, 0)) != indices(active_subset(default_registry(), p, 1)));
}

TEST_CASE("m = N - 1 omits exactly one instance") {
    const TransformRegistry& reg = default_registry();
    EpochPolicy p;
    p.m = reg.size() - 1;
    p.rotation_seed = 3;
    const auto s = active_subset(reg, p, 5);
    CHECK(s.size() == reg.size() - 1);
    const auto ix = indices(s);
    CHECK(std::set<std::size_t>(ix.begin(), ix.end()).size() == reg.size() - 1);
}

TEST_CASE("m larger than N is rejected") {
    EpochPolicy p;
    p.m = default_registry().size() + 1;
    CHECK_THROWS_AS(active_subset(default_registry(), p, 0), ConfigError);
}

TEST_CASE("subset secrecy: different rotation seeds give different subsets") {
    Rng rng(2024);
    int differ = 0;
    for (int t = 0; t < 100; ++t) {
        EpochPolicy a, b;
        a.rotation_seed = rng.next();
        b.rotation_seed = rng.next();
        differ += indices(active_subset(default_registry(), a, 0)) != indices(active_subset(default_registry(), b, 0));
    }
    // Two independent 8-of-64 draws coincide with probability 1 / C(64, 8).
    CHECK(differ == 100);
}

TEST_CASE("epoch index from time") {
    EpochPolicy p;
    const auto t0 = std::chrono::system_clock::time_point{};
    CHECK(p.epoch_at(t0) == 0);
    CHECK(p.epoch_at(t0 + std::chrono::hours(23)) == 0);
    CHECK(p.epoch_at(t0 + std::chrono::hours(24)) == 1);
    CHECK(p.epoch_at(t0 + std::chrono::hours(24 * 10 + 5)) == 10);
}

TEST_CASE("conjunct bias acts on sampling constraints") {
    const auto bias = family_instances(default_registry(), TransformFamily::ConjunctBias);
    REQUIRE(!bias.empty());
    const SampleConstraints base;
    const SampleConstraints out = apply_spec_stage(base, bias, 0.6);
    CHECK(out.prefer_conjuncts);
    CHECK(out.weights.conjunct_depth2 >= base.weights.conjunct_depth2);
    CHECK(out.min_clusters == base.min_clusters);
    const std::vector<TransformInstance> none;
    CHECK(apply_spec_stage(base, none, 0.6) == base);
}

TEST_CASE("empty subset is the identity") {
    const Renderer& r = testing::renderer();
    const Obfuscator ob(r);
    for (const auto& w : {"कर्मणि", "योग", "क्षेत्र"}) {
        const ChallengeText t = make_challenge_text(w);
        const ShapedText s = r.shape(t);
        const CanvasFrame f = r.frame(s);
        const Raster clean = r.rasterize(s);
        Raster out = clean;
        apply_raster_stage(out, RasterContext{f, s}, {}, 99, 1.0);
        CHECK(out == clean);
        CHECK(ob.apply(t, {}, 99).raster == ob.renderer().render(t));
    }
}

TEST_CASE("obfuscation is deterministic") {
    const Obfuscator ob(testing::renderer());
    EpochPolicy p;
    p.rotation_seed = 11;
    for (std::uint64_t e = 0; e < 10; ++e) {
        const auto subset = active_subset(default_registry(), p, e);
        const ChallengeText t = make_challenge_text("कर्मणि");
        const Obfuscator fresh(Renderer::from_files(default_font_paths()));
        CHECK(encode_png(ob.apply(t, subset, e).raster) == encode_png(fresh.apply(t, subset, e).raster));
    }
}

TEST_CASE("every instance alone keeps coverage in the window and stays in bounds") {
    const Obfuscator ob(testing::renderer());
    const CanvasConfig& cc = ob.renderer().config().canvas;
    for (const auto& inst : default_registry().instances) {
        const std::vector<TransformInstance> alone{inst};
        for (const char* w : {"कर्मणि", "क्षेत्र", "नमस्ते"}) {
            const Raster img = ob.apply(make_challenge_text(w), alone, inst.index).raster;
            const double c = ink_coverage(img);
            CHECK_MESSAGE((c >= 0.02 && c <= 0.5), to_string(inst.family) << "/" << inst.variant << " " << c);
            CHECK((img.width >= cc.min_width && img.width <= cc.max_width));
            CHECK((img.height >= cc.min_height && img.height <= cc.max_height));
        }
    }
}

TEST_CASE("shirorekha removal drops headline prominence below 2x") {
    const Obfuscator ob(testing::renderer());
    const auto removal = family_instances(default_registry(), TransformFamily::ShirorekhaRemoval);
    int below = 0, total = 0;
    for (const auto& w : testing::multi_cluster_words()) {
        const ChallengeText t = make_challenge_text(w);
        for (const auto& inst : removal) {
            const std::vector<TransformInstance> alone{inst};
            const double p = headline_prominence(ob.apply(t, alone, total).raster);
            ++total;
            below += p < 2.0;
            CHECK_MESSAGE(p < 2.0, w << " " << inst.variant << " prominence " << p);
        }
    }
    MESSAGE(below << " of " << total << " below 2x");
}

TEST_CASE("a curve through the string spans the core strip") {
    const Obfuscator ob(testing::renderer());
    const auto curves = family_instances(default_registry(), TransformFamily::CurveThroughString);
    std::uint64_t seed = 0;
    for (const auto& w : testing::multi_cluster_words()) {
        const ChallengeText t = make_challenge_text(w);
        for (const auto& inst : curves) {
            const std::vector<TransformInstance> alone{inst};
            const Obfuscated o = ob.apply(t, alone, ++seed);
            const int text_width = o.frame.ink_right - o.frame.ink_left + 1;
            const int top = o.frame.metrics.headline_row + 3;
            const int bottom = static_cast<int>(o.frame.baseline);
            const int path = widest_path_in_rows(o.raster, top, bottom);
            CHECK_MESSAGE(path >= 0.9 * text_width, w << " " << inst.variant << " path " << path << " of " << text_width);
        }
    }
}

TEST_CASE("coverage stays in [0.02, 0.5] over words and seeds") {
    const Obfuscator ob(testing::renderer());
    EpochPolicy p;
    p.rotation_seed = 5;
    const auto words = testing::multi_cluster_words();
    for (std::size_t wi = 0; wi < words.size(); wi += 10) {
        const ChallengeText t = make_challenge_text(words[wi]);
        for (std::uint64_t s = 0; s < 100; ++s) {
            const auto subset = active_subset(default_registry(), p, s);
            const double c = ink_coverage(ob.apply(t, subset, s).raster);
            CHECK_MESSAGE((c >= 0.02 && c <= 0.5), words[wi] << " seed " << s << " coverage " << c);
        }
    }
}

TEST_CASE("difficulty raises ink coverage") {
    const Obfuscator easy(testing::renderer(), 0.0);
    const Obfuscator hard(testing::renderer(), 1.0);
    EpochPolicy p;
    p.rotation_seed = 17;
    double delta = 0.0;
    Rng rng(3);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const ChallengeText t = testing::sample_corpus().sample_word(SampleConstraints{}, rng);
        const auto subset = active_subset(default_registry(), p, s);
        delta += ink_coverage(hard.apply(t, subset, s).raster) - ink_coverage(easy.apply(t, subset, s).raster);
    }
    CHECK(delta / 50.0 >= 0.02);
}

TEST_CASE("obfuscation never alters the text it is given") {
    const Obfuscator ob(testing::renderer());
    EpochPolicy p;
    const ChallengeText t = make_challenge_text("कर्मणि योग");
    const ChallengeText copy = t;
    for (std::uint64_t e = 0; e < 20; ++e) {
        (void)ob.apply(t, active_subset(default_registry(), p, e), e);
        CHECK(t.normalized == copy.normalized);
        CHECK(t.clusters == copy.clusters);
    }
}
