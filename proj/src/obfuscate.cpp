#include "deva/obfuscate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deva/rng.hpp"

namespace deva {

namespace {

using F = TransformFamily;

const std::map<F, FamilySpec>& family_table() {
    static const std::map<F, FamilySpec> table = {
        {F::FontVariation, {F::FontVariation, {"mixed_faces", "alternate_faces"}, {{"fraction", 0.2, 1.0, 0.2}}}},
        {F::FontSizeVariation, {F::FontSizeVariation, {"jitter", "ramp"}, {{"size_jitter", 0.05, 0.35, 0.05}}}},
        {F::CharacterSpacing,
         {F::CharacterSpacing,
          {"overlap", "shadow", "joined"},
          {{"overlap_em", 0.0, 0.25, 0.0}, {"shadow_px", 1.0, 4.0, 1.0}, {"join_width", 1.5, 3.5, 1.5}}}},
        {F::Skew, {F::Skew, {"shear", "rotate"}, {{"angle_deg", -15.0, 15.0, 0.0}}}},
        {F::Noise,
         {F::Noise,
          {"mosaic", "arcs", "additive", "subtractive", "faded", "frayed"},
          {{"density", 0.01, 0.10, 0.01}}}},
        {F::InterferingBackground,
         {F::InterferingBackground,
          {"grid", "dots", "waves"},
          {{"intensity", 0.3, 0.75, 0.3}, {"spacing", 6.0, 14.0, 14.0}}}},
        {F::ShirorekhaRemoval,
         {F::ShirorekhaRemoval, {"full", "partial"}, {{"band", 1.0, 1.8, 1.0}, {"stub", 0.0, 0.3, 0.3}}}},
        {F::CurveThroughString,
         {F::CurveThroughString, {"sine", "bezier"}, {{"amplitude", 2.0, 10.0, 2.0}, {"thickness", 1.5, 3.5, 1.5}}}},
        {F::ConjunctBias, {F::ConjunctBias, {"prefer_conjuncts"}, {{"weight", 2.0, 6.0, 2.0}}}},
        {F::CharacterDistortion, {F::CharacterDistortion, {"stretch", "compress"}, {{"factor", 0.05, 0.35, 0.05}}}},
        {F::BaselineAlongCurve,
         {F::BaselineAlongCurve, {"sine", "arc"}, {{"amplitude", 2.0, 10.0, 2.0}, {"period", 60.0, 200.0, 200.0}}}},
    };
    return table;
}

// Interpolates from the neutral value toward the instance value by difficulty and per-challenge jitter.
struct Effective {
    const TransformInstance& inst;
    double scale;
    double operator()(std::string_view name) const {
        const double neutral = inst.range(name).neutral;
        return neutral + (inst.param(name) - neutral) * scale;
    }
};

Effective effective(const TransformInstance& inst, double difficulty, Rng& rng) {
    return {inst, std::clamp(difficulty, 0.0, 1.0) * rng.uniform(0.8, 1.0)};
}

std::uint64_t instance_seed(std::uint64_t seed, const TransformInstance& inst) {
    return mix64(seed, static_cast<std::uint64_t>(inst.index) + 1);
}

// --- raster helpers -------------------------------------------------------

void darken(Raster& r, int x, int y, double ink) {
    if (!r.contains(x, y)) return;
    auto& p = r.pixels[static_cast<std::size_t>(y) * r.width + x];
    const auto v = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::clamp(ink, 0.0, 1.0))));
    p = std::min(p, v);
}

void draw_line(Raster& r, double ax, double ay, double bx, double by, double width, double ink) {
    const double rad = width / 2.0;
    const int xa = static_cast<int>(std::floor(std::min(ax, bx) - rad - 1));
    const int xb = static_cast<int>(std::ceil(std::max(ax, bx) + rad + 1));
    const int ya = static_cast<int>(std::floor(std::min(ay, by) - rad - 1));
    const int yb = static_cast<int>(std::ceil(std::max(ay, by) + rad + 1));
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    for (int y = std::max(0, ya); y <= std::min(r.height - 1, yb); ++y) {
        for (int x = std::max(0, xa); x <= std::min(r.width - 1, xb); ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            const double t = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
            const double d = std::hypot(ax + t * dx - px, ay + t * dy - py);
            const double v = std::clamp(rad + 0.5 - d, 0.0, 1.0);
            if (v > 0) darken(r, x, y, v * ink);
        }
    }
}

void draw_polyline(Raster& r, const std::vector<std::pair<double, double>>& pts, double width, double ink) {
    for (std::size_t k = 1; k < pts.size(); ++k)
        draw_line(r, pts[k - 1].first, pts[k - 1].second, pts[k].first, pts[k].second, width, ink);
}

double sample(const Raster& r, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const auto at = [&](int xx, int yy) -> double { return r.contains(xx, yy) ? r.at(xx, yy) : 255.0; };
    return (at(x0, y0) * (1 - fx) + at(x0 + 1, y0) * fx) * (1 - fy) +
           (at(x0, y0 + 1) * (1 - fx) + at(x0 + 1, y0 + 1) * fx) * fy;
}

// Inverse-mapped resampling: dst(x, y) = src(map(x, y)).
template <class Map>
void remap(Raster& r, Map map) {
    const Raster src = r;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const auto [sx, sy] = map(x + 0.5, y + 0.5);
            r.pixels[static_cast<std::size_t>(y) * r.width + x] =
                static_cast<std::uint8_t>(std::lround(std::clamp(sample(src, sx - 0.5, sy - 0.5), 0.0, 255.0)));
        }
    }
}

bool is_ink(const Raster& r, int x, int y) { return r.contains(x, y) && r.at(x, y) < 128; }

// --- raster transforms ----------------------------------------------------

void skew(Raster& r, const RasterContext& ctx, const TransformInstance& inst, const Effective& e) {
    const double a = e("angle_deg") * std::numbers::pi / 180.0;
    const double cx = 0.5 * (ctx.frame.ink_left + ctx.frame.ink_right);
    const double cy = 0.5 * r.height;
    if (inst.variant == "rotate") {
        const double c = std::cos(a);
        const double s = std::sin(a);
        remap(r, [&](double x, double y) {
            const double dx = x - cx;
            const double dy = y - cy;
            return std::pair{cx + c * dx + s * dy, cy - s * dx + c * dy};
        });
    } else {
        const double t = std::tan(a);
        remap(r, [&](double x, double y) { return std::pair{x + t * (y - cy), y}; });
    }
}

void noise(Raster& r, const RasterContext& ctx, const TransformInstance& inst, const Effective& e, Rng& rng) {
    const double density = e("density");
    const int w = r.width;
    const int h = r.height;
    const std::string& v = inst.variant;
    if (v == "additive") {
        const auto n = static_cast<std::size_t>(density * w * h);
        for (std::size_t i = 0; i < n; ++i)
            darken(r, static_cast<int>(rng.below(static_cast<std::uint64_t>(w))),
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(h))), rng.uniform(0.75, 1.0));
    } else if (v == "subtractive") {
        const double p = std::min(1.0, 3.0 * density);
        for (auto& px : r.pixels)
            if (px < 128 && rng.chance(p)) px = 255;
    } else if (v == "faded") {
        const double fade = std::min(0.35, 3.5 * density);
        for (auto& px : r.pixels) px = static_cast<std::uint8_t>(255 - std::lround((255 - px) * (1.0 - fade)));
        const int blotches = 1 + static_cast<int>(density * 40);
        for (int b = 0; b < blotches; ++b) {
            const double bx = rng.uniform(0, w);
            const double by = rng.uniform(0, h);
            const double rad = rng.uniform(4, 12);
            for (int y = std::max(0, static_cast<int>(by - rad)); y < std::min(h, static_cast<int>(by + rad) + 1); ++y)
                for (int x = std::max(0, static_cast<int>(bx - rad)); x < std::min(w, static_cast<int>(bx + rad) + 1);
                     ++x) {
                    if (std::hypot(x - bx, y - by) > rad) continue;
                    auto& px = r.pixels[static_cast<std::size_t>(y) * w + x];
                    px = static_cast<std::uint8_t>(255 - std::lround((255 - px) * 0.6));
                }
        }
    } else if (v == "frayed") {
        const double p = std::min(1.0, 5.0 * density);
        const Raster src = r;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!is_ink(src, x, y)) continue;
                const bool edge = !is_ink(src, x - 1, y) || !is_ink(src, x + 1, y) || !is_ink(src, x, y - 1) ||
                                  !is_ink(src, x, y + 1);
                if (edge && rng.chance(p)) r.pixels[static_cast<std::size_t>(y) * w + x] = 255;
            }
        const int fibres = static_cast<int>(density * 120);
        for (int f = 0; f < fibres; ++f) {
            const double x = rng.uniform(ctx.frame.ink_left, ctx.frame.ink_right);
            const double y = rng.uniform(ctx.frame.metrics.headline_row, ctx.frame.baseline);
            const double ang = rng.uniform(0, 2 * std::numbers::pi);
            const double len = rng.uniform(3, 8);
            draw_line(r, x, y, x + len * std::cos(ang), y + len * std::sin(ang), 1.0, 0.9);
        }
    } else if (v == "arcs") {
        const int arcs = std::max(1, static_cast<int>(std::lround(density * 100)));
        for (int a = 0; a < arcs; ++a) {
            const double cx = rng.uniform(ctx.frame.ink_left, ctx.frame.ink_right);
            const double cy = rng.uniform(0, h);
            const double rad = rng.uniform(10, 40);
            const double start = rng.uniform(0, 2 * std::numbers::pi);
            const double sweep = rng.uniform(0.6, 2.0);
            std::vector<std::pair<double, double>> pts;
            for (int k = 0; k <= 24; ++k) {
                const double t = start + sweep * k / 24.0;
                pts.emplace_back(cx + rad * std::cos(t), cy + rad * std::sin(t));
            }
            draw_polyline(r, pts, rng.uniform(1.5, 2.5), 1.0);
        }
    } else {  // mosaic
        const int tile = static_cast<int>(rng.between(6, 10));
        const double p = std::min(1.0, 5.0 * density);
        for (int ty = 0; ty < h; ty += tile)
            for (int tx = 0; tx < w; tx += tile) {
                if (!rng.chance(p)) continue;
                const int shift = static_cast<int>(rng.between(40, 90));
                const bool lighten = rng.chance(0.5);
                for (int y = ty; y < std::min(h, ty + tile); ++y)
                    for (int x = tx; x < std::min(w, tx + tile); ++x) {
                        auto& px = r.pixels[static_cast<std::size_t>(y) * w + x];
                        px = static_cast<std::uint8_t>(std::clamp(px + (lighten ? shift : -shift), 0, 255));
                    }
            }
    }
}

void background(Raster& r, const TransformInstance& inst, const Effective& e, Rng& rng) {
    const double ink = e("intensity");
    const double spacing = std::max(4.0, e("spacing"));
    const int w = r.width;
    const int h = r.height;
    if (inst.variant == "dots") {
        const auto n = static_cast<int>(w * h / (spacing * spacing));
        for (int i = 0; i < n; ++i) {
            const double x = rng.uniform(0, w);
            const double y = rng.uniform(0, h);
            draw_line(r, x, y, x, y, rng.uniform(1.5, 3.0), ink);
        }
    } else if (inst.variant == "waves") {
        const double amp = spacing / 3.0;
        const double period = rng.uniform(30, 70);
        const double phase = rng.uniform(0, 2 * std::numbers::pi);
        for (double y0 = rng.uniform(0, spacing); y0 < h + amp; y0 += spacing) {
            std::vector<std::pair<double, double>> pts;
            for (double x = 0; x <= w; x += 2)
                pts.emplace_back(x, y0 + amp * std::sin(2 * std::numbers::pi * x / period + phase));
            draw_polyline(r, pts, 1.0, ink);
        }
    } else {  // grid
        const double ang = rng.uniform(-0.5, 0.5);
        const double diag = std::hypot(w, h);
        for (int dir = 0; dir < 2; ++dir) {
            const double a = ang + dir * std::numbers::pi / 2;
            const double ux = std::cos(a);
            const double uy = std::sin(a);
            for (double off = -diag + rng.uniform(0, spacing); off < diag; off += spacing) {
                const double px = 0.5 * w - uy * off;
                const double py = 0.5 * h + ux * off;
                draw_line(r, px - ux * diag, py - uy * diag, px + ux * diag, py + uy * diag, 1.0, ink);
            }
        }
    }
}

void remove_headline(Raster& r, const RasterContext& ctx, const TransformInstance& inst, const Effective& e,
                     Rng& rng) {
    const double band = e("band");
    const double stub = inst.variant == "partial" ? e("stub") : 0.0;
    const auto& ps = ctx.shaped.placements;
    const auto& f = ctx.frame;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps[i];
        const bool joins_next = i + 1 < ps.size() && ps[i + 1].word == p.word;
        double xa = f.text_x + p.origin_x + p.ink_left;
        double xb = joins_next ? f.text_x + ps[i + 1].origin_x + ps[i + 1].ink_left : f.text_x + p.origin_x + p.ink_right;
        if (xa > xb) std::swap(xa, xb);
        const double yc = f.baseline + p.dy + p.headline_y;
        const double half = 0.5 * p.headline_thickness * band + 1.0;
        // A partial removal keeps a short stub at a random end of each span.
        if (stub > 0) {
            const double keep = (xb - xa) * stub;
            if (rng.chance(0.5)) xa += keep;
            else xb -= keep;
        }
        for (int y = static_cast<int>(std::floor(yc - half)); y <= static_cast<int>(std::ceil(yc + half)); ++y)
            for (int x = static_cast<int>(std::floor(xa)); x <= static_cast<int>(std::ceil(xb)); ++x)
                if (r.contains(x, y)) r.pixels[static_cast<std::size_t>(y) * r.width + x] = 255;
    }
}

void curve_through(Raster& r, const RasterContext& ctx, const TransformInstance& inst, const Effective& e, Rng& rng) {
    const double amp = e("amplitude");
    const double thick = e("thickness");
    const auto& f = ctx.frame;
    const double x0 = f.ink_left - 6.0;
    const double x1 = f.ink_right + 6.0;
    const double mid = 0.5 * (f.metrics.headline_row + f.baseline);
    std::vector<std::pair<double, double>> pts;
    if (inst.variant == "bezier") {
        const double c1 = mid + rng.uniform(-amp, amp) * 2.0;
        const double c2 = mid + rng.uniform(-amp, amp) * 2.0;
        const double y0 = mid + rng.uniform(-amp, amp) * 0.5;
        const double y1 = mid + rng.uniform(-amp, amp) * 0.5;
        for (int k = 0; k <= 64; ++k) {
            const double t = k / 64.0;
            const double u = 1 - t;
            pts.emplace_back(x0 + (x1 - x0) * t, u * u * u * y0 + 3 * u * u * t * c1 + 3 * u * t * t * c2 + t * t * t * y1);
        }
    } else {
        const double period = rng.uniform(80, 200);
        const double phase = rng.uniform(0, 2 * std::numbers::pi);
        for (double x = x0; x <= x1 + 1; x += 2)
            pts.emplace_back(std::min(x, x1), mid + amp * std::sin(2 * std::numbers::pi * (x - x0) / period + phase));
    }
    draw_polyline(r, pts, thick, 1.0);
}

}  // namespace

Stage stage_of(TransformFamily family) noexcept {
    switch (family) {
        case F::ConjunctBias: return Stage::Spec;
        case F::FontVariation:
        case F::FontSizeVariation:
        case F::CharacterSpacing:
        case F::CharacterDistortion:
        case F::BaselineAlongCurve: return Stage::Layout;
        default: return Stage::Raster;
    }
}

const char* to_string(TransformFamily family) noexcept {
    switch (family) {
        case F::FontVariation: return "font_variation";
        case F::FontSizeVariation: return "font_size_variation";
        case F::CharacterSpacing: return "character_spacing";
        case F::Skew: return "skew";
        case F::Noise: return "noise";
        case F::InterferingBackground: return "interfering_background";
        case F::ShirorekhaRemoval: return "shirorekha_removal";
        case F::CurveThroughString: return "curve_through_string";
        case F::ConjunctBias: return "conjunct_bias";
        case F::CharacterDistortion: return "character_distortion";
        case F::BaselineAlongCurve: return "baseline_along_curve";
    }
    return "noise";
}

const char* to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::Spec: return "spec";
        case Stage::Layout: return "layout";
        case Stage::Raster: return "raster";
    }
    return "raster";
}

std::optional<TransformFamily> family_from_string(std::string_view name) noexcept {
    for (auto f : kAllFamilies)
        if (name == to_string(f)) return f;
    return std::nullopt;
}

const FamilySpec& default_family_spec(TransformFamily family) { return family_table().at(family); }

double TransformInstance::param(std::string_view name) const {
    for (const auto& [k, v] : params)
        if (k == name) return v;
    throw std::out_of_range("instance has no parameter " + std::string(name));
}

const ParamRange& TransformInstance::range(std::string_view name) const {
    for (const auto& r : ranges)
        if (r.name == name) return r;
    throw std::out_of_range("instance has no parameter " + std::string(name));
}

RegistryConfig RegistryConfig::defaults() {
    RegistryConfig c;
    c.counts = {
        {F::FontVariation, 4}, {F::FontSizeVariation, 5},     {F::CharacterSpacing, 9},  {F::Skew, 6},
        {F::Noise, 12},        {F::InterferingBackground, 6}, {F::ShirorekhaRemoval, 4}, {F::CurveThroughString, 6},
        {F::ConjunctBias, 3},  {F::CharacterDistortion, 5},   {F::BaselineAlongCurve, 4},
    };
    return c;
}

TransformRegistry build_registry(const RegistryConfig& config) {
    std::size_t total = 0;
    for (auto f : kAllFamilies) {
        const auto it = config.counts.find(f);
        if (it == config.counts.end() || it->second == 0)
            throw ConfigError(std::string("registry has no instance of family ") + to_string(f));
        total += it->second;
    }
    if (total < kMinRegistrySize || total > kMaxRegistrySize)
        throw ConfigError("registry size " + std::to_string(total) + " outside [50, 100]");

    TransformRegistry reg;
    for (auto f : kAllFamilies) {
        const FamilySpec& spec = default_family_spec(f);
        std::vector<ParamRange> ranges = spec.params;
        if (auto o = config.ranges.find(f); o != config.ranges.end()) {
            for (const auto& ov : o->second) {
                auto r = std::find_if(ranges.begin(), ranges.end(), [&](const auto& x) { return x.name == ov.name; });
                if (r == ranges.end())
                    throw ConfigError("family " + std::string(to_string(f)) + " has no parameter " + ov.name);
                if (!(ov.lo <= ov.hi) || ov.neutral < ov.lo || ov.neutral > ov.hi)
                    throw ConfigError("invalid range for " + std::string(to_string(f)) + "." + ov.name);
                // Overrides may only narrow the built-in range.
                if (ov.lo < r->lo || ov.hi > r->hi)
                    throw ConfigError("range for " + std::string(to_string(f)) + "." + ov.name + " exceeds the family bounds");
                *r = ov;
            }
        }
        const std::size_t count = config.counts.at(f);
        const std::size_t nv = spec.variants.size();
        const std::size_t tiers = (count + nv - 1) / nv;
        for (std::size_t j = 0; j < count; ++j) {
            TransformInstance inst;
            inst.index = reg.instances.size();
            inst.family = f;
            inst.variant = spec.variants[j % nv];
            const std::size_t tier = j / nv;
            const double strength = 0.5 + 0.5 * static_cast<double>(tier + 1) / static_cast<double>(tiers);
            for (const auto& r : ranges) {
                double target = r.hi;
                if (r.neutral == r.hi) target = r.lo;
                else if (r.neutral > r.lo && tier % 2 == 1) target = r.lo;
                inst.params.emplace_back(r.name, r.neutral + (target - r.neutral) * strength);
            }
            inst.ranges = ranges;
            reg.instances.push_back(std::move(inst));
        }
    }
    return reg;
}

std::uint64_t EpochPolicy::epoch_at(std::chrono::system_clock::time_point t) const {
    if (epoch_length.count() <= 0) throw ConfigError("epoch length must be positive");
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
    if (secs < 0) return 0;
    return static_cast<std::uint64_t>(secs) / static_cast<std::uint64_t>(epoch_length.count());
}

std::vector<TransformInstance> active_subset(const TransformRegistry& registry, const EpochPolicy& policy,
                                             std::uint64_t epoch_index) {
    if (policy.m > registry.size())
        throw ConfigError("active subset size " + std::to_string(policy.m) + " exceeds registry size " +
                          std::to_string(registry.size()));
    Rng rng(mix64(policy.rotation_seed, epoch_index));
    auto idx = rng.sample_indices(registry.size(), policy.m);
    std::sort(idx.begin(), idx.end());
    std::vector<TransformInstance> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(registry.instances[i]);
    return out;
}

SampleConstraints apply_spec_stage(SampleConstraints constraints, std::span<const TransformInstance> subset,
                                   double difficulty) {
    for (const auto& inst : subset) {
        if (inst.family != F::ConjunctBias) continue;
        const double neutral = inst.range("weight").neutral;
        const double w = neutral + (inst.param("weight") - neutral) * std::clamp(difficulty, 0.0, 1.0);
        constraints.prefer_conjuncts = true;
        constraints.conjunct_weight = std::max(constraints.conjunct_weight, w);
        constraints.weights.conjunct_depth2 = std::min(0.6, constraints.weights.conjunct_depth2 * w / 2.0);
        constraints.weights.conjunct_depth3 = std::min(0.2, constraints.weights.conjunct_depth3 * w / 2.0);
    }
    return constraints;
}

void apply_raster_stage(Raster& raster, const RasterContext& context, std::span<const TransformInstance> subset,
                        std::uint64_t seed, double difficulty) {
    for (const auto& inst : subset) {
        if (stage_of(inst.family) != Stage::Raster) continue;
        Rng rng(instance_seed(seed, inst));
        const Effective e = effective(inst, difficulty, rng);
        Raster next = raster;
        switch (inst.family) {
            case F::Skew: skew(next, context, inst, e); break;
            case F::Noise: noise(next, context, inst, e, rng); break;
            case F::InterferingBackground: background(next, inst, e, rng); break;
            case F::ShirorekhaRemoval: remove_headline(next, context, inst, e, rng); break;
            case F::CurveThroughString: curve_through(next, context, inst, e, rng); break;
            default: break;
        }
        const double cov = ink_coverage(next);
        if (cov >= kMinInkCoverage && cov <= kMaxInkCoverage) raster = std::move(next);
    }
}

Obfuscator::Obfuscator(const Renderer& renderer, double difficulty, int extra_padding)
    : renderer_([&] {
          RenderConfig cfg = renderer.config();
          cfg.canvas.padding += std::max(0, extra_padding);
          return Renderer(renderer.faces(), cfg);
      }()),
      difficulty_(std::clamp(difficulty, 0.0, 1.0)) {}

ShapedText Obfuscator::apply_layout_stage(const ChallengeText& text, std::span<const TransformInstance> subset,
                                          std::uint64_t seed) const {
    const std::size_t n = text.clusters.size();
    const int faces = static_cast<int>(renderer_.faces().size());
    std::vector<ClusterStyle> styles(n);
    bool styled = false;

    const auto last_in_word = [&](std::size_t i) {
        std::size_t end = 0;
        for (auto s : text.word_sizes) {
            end += s;
            if (i + 1 == end) return true;
        }
        return i + 1 >= n;
    };

    for (const auto& inst : subset) {
        if (stage_of(inst.family) != Stage::Layout) continue;
        Rng rng(instance_seed(seed, inst));
        const Effective e = effective(inst, difficulty_, rng);
        switch (inst.family) {
            case F::FontVariation: {
                if (faces < 2) break;
                const double fraction = e("fraction");
                const int shift = static_cast<int>(rng.between(1, faces - 1));
                for (std::size_t i = 0; i < n; ++i) {
                    const bool swap = inst.variant == "alternate_faces" ? i % 2 == 1 : rng.chance(fraction);
                    if (swap) styles[i].face = (styles[i].face + shift) % faces;
                }
                styled = true;
                break;
            }
            case F::FontSizeVariation: {
                const double j = e("size_jitter");
                const double dir = rng.chance(0.5) ? 1.0 : -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double t = n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
                    const double k = inst.variant == "ramp" ? dir * t : rng.uniform(-1.0, 1.0);
                    styles[i].size_scale *= static_cast<float>(std::max(0.6, 1.0 + j * k));
                }
                styled = true;
                break;
            }
            case F::CharacterDistortion: {
                const double factor = e("factor");
                for (std::size_t i = 0; i < n; ++i) {
                    if (!rng.chance(0.7)) continue;
                    const double k = factor * rng.uniform(0.5, 1.0);
                    if (inst.variant == "compress") {
                        styles[i].scale_x *= static_cast<float>(1.0 - k);
                        styles[i].scale_y *= static_cast<float>(1.0 + 0.3 * k);
                    } else {
                        styles[i].scale_x *= static_cast<float>(1.0 + k);
                        styles[i].scale_y *= static_cast<float>(1.0 - 0.3 * k);
                    }
                }
                styled = true;
                break;
            }
            case F::CharacterSpacing: {
                if (inst.variant != "overlap") break;
                const double ov = e("overlap_em");
                const double em = renderer_.config().font_size;
                for (std::size_t i = 0; i < n; ++i)
                    if (!last_in_word(i))
                        styles[i].spacing_after -= static_cast<float>(ov * em * rng.uniform(0.5, 1.0));
                styled = true;
                break;
            }
            default: break;
        }
    }

    const std::span<const ClusterStyle> style_span = styled ? std::span<const ClusterStyle>(styles) : std::span<const ClusterStyle>();
    for (float em = renderer_.config().font_size;; em -= 4.0f) {
        ShapedText shaped = renderer_.shape(text, style_span, em);
        for (const auto& inst : subset) {
            if (stage_of(inst.family) != Stage::Layout) continue;
            Rng rng(instance_seed(seed ^ 0x9e3779b97f4a7c15ULL, inst));
            const Effective e = effective(inst, difficulty_, rng);
            auto& ps = shaped.placements;
            if (inst.family == F::BaselineAlongCurve) {
                const double amp = e("amplitude") * em / 48.0;
                const double period = e("period");
                const double phase = rng.uniform(0, 2 * std::numbers::pi);
                const double sign = rng.chance(0.5) ? 1.0 : -1.0;
                const double span = ps.empty() ? 1.0 : std::max(1.0f, ps.back().origin_x + ps.back().advance);
                for (auto& p : ps) {
                    const double x = p.origin_x + 0.5 * p.advance;
                    if (inst.variant == "arc") {
                        const double t = 2.0 * x / span - 1.0;
                        p.dy += static_cast<float>(sign * amp * (t * t - 0.5));
                    } else {
                        p.dy += static_cast<float>(amp * std::sin(2 * std::numbers::pi * x / period + phase));
                    }
                }
            } else if (inst.family == F::CharacterSpacing && inst.variant == "shadow") {
                const float off = static_cast<float>(e("shadow_px") * em / 48.0);
                for (auto& p : ps) {
                    const std::size_t base = p.glyphs.size();
                    for (std::size_t g = 0; g < base; ++g) {
                        PlacedGlyph s = p.glyphs[g];
                        s.x += off;
                        s.y += 0.6f * off;
                        s.ink = 0.45f;
                        p.glyphs.push_back(s);
                    }
                    p.ink_right += off;
                }
            } else if (inst.family == F::CharacterSpacing && inst.variant == "joined") {
                const float width = static_cast<float>(e("join_width"));
                for (std::size_t i = 0; i + 1 < ps.size(); ++i) {
                    if (!rng.chance(0.8)) continue;
                    const auto& a = ps[i];
                    const auto& b = ps[i + 1];
                    const float ya = a.dy + a.headline_y * static_cast<float>(rng.uniform(0.2, 0.7));
                    const float yb = b.dy + b.headline_y * static_cast<float>(rng.uniform(0.2, 0.7));
                    shaped.strokes.push_back(
                        {{{a.origin_x + a.ink_right - 2.0f, ya}, {b.origin_x + b.ink_left + 2.0f, yb}}, width, 1.0f});
                }
            }
        }
        try {
            (void)renderer_.frame(shaped);
            return shaped;
        } catch (const CanvasOverflow&) {
            if (em - 4.0f < 24.0f) throw;
        }
    }
}

Obfuscated Obfuscator::apply(const ChallengeText& text, std::span<const TransformInstance> subset,
                             std::uint64_t seed) const {
    Obfuscated out;
    out.shaped = apply_layout_stage(text, subset, seed);
    out.frame = renderer_.frame(out.shaped);
    out.raster = renderer_.rasterize(out.shaped);
    apply_raster_stage(out.raster, RasterContext{out.frame, out.shaped}, subset, seed, difficulty_);
    return out;
}

}  // namespace deva
