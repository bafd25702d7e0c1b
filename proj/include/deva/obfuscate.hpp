#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deva/corpus.hpp"
#include "deva/image.hpp"
#include "deva/render.hpp"

namespace deva {

enum class TransformFamily {
    FontVariation,
    FontSizeVariation,
    CharacterSpacing,
    Skew,
    Noise,
    InterferingBackground,
    ShirorekhaRemoval,
    CurveThroughString,
    ConjunctBias,
    CharacterDistortion,
    BaselineAlongCurve,
};

inline constexpr std::array<TransformFamily, 11> kAllFamilies = {
    TransformFamily::FontVariation,         TransformFamily::FontSizeVariation, TransformFamily::CharacterSpacing,
    TransformFamily::Skew,                  TransformFamily::Noise,             TransformFamily::InterferingBackground,
    TransformFamily::ShirorekhaRemoval,     TransformFamily::CurveThroughString, TransformFamily::ConjunctBias,
    TransformFamily::CharacterDistortion,   TransformFamily::BaselineAlongCurve,
};

/// Where a family acts: on sampling, on glyph placement, or on pixels.
enum class Stage { Spec, Layout, Raster };

Stage stage_of(TransformFamily family) noexcept;
const char* to_string(TransformFamily family) noexcept;
const char* to_string(Stage stage) noexcept;
std::optional<TransformFamily> family_from_string(std::string_view name) noexcept;

/// A named parameter. `neutral` is the value used at difficulty 0.
struct ParamRange {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    double neutral = 0.0;
    friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

struct FamilySpec {
    TransformFamily family;
    std::vector<std::string> variants;
    std::vector<ParamRange> params;
};

/// Built-in variants and parameter ranges of a family.
const FamilySpec& default_family_spec(TransformFamily family);

struct TransformInstance {
    std::size_t index = 0;  // position in the registry
    TransformFamily family = TransformFamily::Noise;
    std::string variant;
    std::vector<std::pair<std::string, double>> params;
    std::vector<ParamRange> ranges;  // parallel to params

    /// Throw std::out_of_range for an unknown name.
    double param(std::string_view name) const;
    const ParamRange& range(std::string_view name) const;
    friend bool operator==(const TransformInstance&, const TransformInstance&) = default;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RegistryConfig {
    std::map<TransformFamily, std::size_t> counts;
    std::map<TransformFamily, std::vector<ParamRange>> ranges;  // optional overrides by family

    /// 64 instances over all 11 families.
    static RegistryConfig defaults();
};

struct TransformRegistry {
    std::vector<TransformInstance> instances;
    std::size_t size() const noexcept { return instances.size(); }
    friend bool operator==(const TransformRegistry&, const TransformRegistry&) = default;
};

inline constexpr std::size_t kMinRegistrySize = 50;
inline constexpr std::size_t kMaxRegistrySize = 100;

/// Throws ConfigError when the total is outside [50, 100], a family is absent,
/// or an override range is inverted.
TransformRegistry build_registry(const RegistryConfig& config);

struct EpochPolicy {
    std::chrono::seconds epoch_length{24 * 3600};
    std::size_t m = 8;
    std::uint64_t rotation_seed = 0;

    std::uint64_t epoch_at(std::chrono::system_clock::time_point t) const;
};

/// m distinct instances drawn without replacement for an epoch, in registry order.
std::vector<TransformInstance> active_subset(const TransformRegistry& registry, const EpochPolicy& policy,
                                             std::uint64_t epoch_index);

/// Applies spec-stage instances (ConjunctBias) to sampling constraints.
SampleConstraints apply_spec_stage(SampleConstraints constraints, std::span<const TransformInstance> subset,
                                   double difficulty);

struct RasterContext {
    const CanvasFrame& frame;
    const ShapedText& shaped;
};

/// Coverage window every raster transform must respect; a transform that would leave it is skipped.
inline constexpr double kMinInkCoverage = 0.02;
inline constexpr double kMaxInkCoverage = 0.48;

/// Mutates pixels for each raster-stage instance in registry order.
void apply_raster_stage(Raster& raster, const RasterContext& context, std::span<const TransformInstance> subset,
                        std::uint64_t seed, double difficulty);

struct Obfuscated {
    Raster raster;
    ShapedText shaped;
    CanvasFrame frame;
};

/// The layout + raster pipeline. Never touches the answer text.
class Obfuscator {
public:
    /// `extra_padding` widens the canvas so skew and curves stay inside it.
    Obfuscator(const Renderer& renderer, double difficulty = 0.6, int extra_padding = 24);

    double difficulty() const noexcept { return difficulty_; }
    const Renderer& renderer() const noexcept { return renderer_; }

    ShapedText apply_layout_stage(const ChallengeText& text, std::span<const TransformInstance> subset,
                                  std::uint64_t seed) const;
    Obfuscated apply(const ChallengeText& text, std::span<const TransformInstance> subset, std::uint64_t seed) const;

private:
    Renderer renderer_;
    double difficulty_;
};

}  // namespace deva
