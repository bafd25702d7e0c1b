#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deva/rng.hpp"

namespace deva {

// Devanagari block boundaries.
inline constexpr char32_t kDevanagariFirst = 0x0900;
inline constexpr char32_t kDevanagariLast = 0x097F;
inline constexpr char32_t kVirama = 0x094D;
inline constexpr char32_t kNukta = 0x093C;

constexpr bool in_devanagari_block(char32_t cp) noexcept {
    return cp >= kDevanagariFirst && cp <= kDevanagariLast;
}

enum class ClassKind {
    IndependentVowel,
    Consonant,
    DependentVowelSign,
    Virama,
    Nukta,
    CombiningSign,
    Digit,
    Other,
};

enum class MatraPosition { Left, Right, Above, Below };

struct CodepointClass {
    ClassKind kind = ClassKind::Other;
    MatraPosition position = MatraPosition::Right;  // meaningful for DependentVowelSign
    int digit_value = -1;                           // meaningful for Digit

    friend bool operator==(const CodepointClass&, const CodepointClass&) = default;
};

/// Total over all codepoints; anything outside U+0900..U+097F is Other.
CodepointClass classify(char32_t cp) noexcept;

const char* to_string(ClassKind kind) noexcept;

std::u32string utf8_to_u32(std::string_view text);
std::string u32_to_utf8(std::u32string_view text);
std::string u32_to_utf8(char32_t cp);

/// NFC, drop ZWJ/ZWNJ, trim, collapse whitespace runs to a single U+0020.
std::string normalize(std::string_view text);

class MalformedText : public std::runtime_error {
public:
    MalformedText(const std::string& what, std::size_t offset)
        : std::runtime_error(what), offset_(offset) {}
    /// Codepoint offset of the first offending codepoint.
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class InvalidLength : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ClusterKind { Digit, VowelSyllable, ConsonantSyllable };

/// One akshara.
struct Cluster {
    std::u32string codepoints;
    ClusterKind kind = ClusterKind::ConsonantSyllable;
    int conjunct_depth = 0;  // consonants joined by virama; 0 for non-consonant clusters

    std::string utf8() const { return u32_to_utf8(codepoints); }
    friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct ChallengeText {
    std::string normalized;
    std::vector<Cluster> clusters;
    std::vector<std::size_t> word_sizes;  // clusters per space-separated word

    std::size_t size() const noexcept { return clusters.size(); }
    int max_conjunct_depth() const noexcept;
};

/// Partition the non-space codepoints of normalized text into clusters.
///
///   cluster := Digit
///            | IndependentVowel CombiningSign*
///            | (Consonant Nukta? Virama)* Consonant Nukta? DependentVowelSign? CombiningSign*
///
/// Throws MalformedText on the first codepoint that cannot extend or start a cluster.
std::vector<Cluster> segment_clusters(std::string_view normalized_text);

/// normalize() followed by segmentation.
ChallengeText make_challenge_text(std::string_view text);

/// Policy for synthesized (non-dictionary) strings.
struct GenerationWeights {
    double digit = 0.10;
    double vowel_syllable = 0.15;
    double consonant_syllable = 0.75;
    double conjunct_depth2 = 0.25;
    double conjunct_depth3 = 0.05;
    double matra = 0.60;
    double combining_sign = 0.08;

    void validate() const;
};

Cluster random_cluster(Rng& rng, const GenerationWeights& weights = {});

/// A single word of exactly n_clusters clusters. Throws InvalidLength for n_clusters == 0.
ChallengeText random_string(Rng& rng, std::size_t n_clusters, const GenerationWeights& weights = {});

/// Codepoint sets used by the generator.
std::u32string_view simple_consonants() noexcept;  // 33
std::u32string_view simple_vowels() noexcept;      // 11
std::u32string_view simple_matras() noexcept;      // 10, one per non-inherent vowel

}  // namespace deva
