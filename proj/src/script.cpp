#include "deva/script.hpp"

#include <array>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace deva {

namespace {

constexpr char32_t kZwnj = 0x200C;
constexpr char32_t kZwj = 0x200D;
constexpr char32_t kReplacement = 0xFFFD;

constexpr std::u32string_view kConsonants =
    U"कखगघङचछजझञट"
    U"ठडढणतथदधनपफ"
    U"बभमयरलवशषसह";
constexpr std::u32string_view kVowels =
    U"अआइईउऊऋएऐओऔ";
constexpr std::u32string_view kMatras =
    U"ािीुूृेैोौ";
constexpr std::u32string_view kGeneratedSigns = U"ँं";

static_assert(kConsonants.size() == 33);
static_assert(kVowels.size() == 11);
static_assert(kMatras.size() == 10);

CodepointClass matra(MatraPosition p) { return {ClassKind::DependentVowelSign, p, -1}; }

bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0; }

}  // namespace

CodepointClass classify(char32_t cp) noexcept {
    using K = ClassKind;
    using P = MatraPosition;
    if (!in_devanagari_block(cp)) return {};
    if (cp <= 0x0903) return {K::CombiningSign};
    if (cp <= 0x0914) return {K::IndependentVowel};
    if (cp <= 0x0939) return {K::Consonant};
    switch (cp) {
        case 0x093A: return matra(P::Above);
        case 0x093B: return matra(P::Right);
        case 0x093C: return {K::Nukta};
        case 0x093D: return {};  // avagraha
        case 0x093E: return matra(P::Right);
        case 0x093F: return matra(P::Left);
        case 0x0940: return matra(P::Right);
        case 0x094D: return {K::Virama};
        case 0x094E: return matra(P::Left);
        case 0x094F: return matra(P::Right);
        case 0x0955: return matra(P::Above);
        case 0x0956:
        case 0x0957: return matra(P::Below);
        case 0x0960:
        case 0x0961: return {K::IndependentVowel};
        case 0x0962:
        case 0x0963: return matra(P::Below);
        default: break;
    }
    if (cp >= 0x0941 && cp <= 0x0944) return matra(P::Below);
    if (cp >= 0x0945 && cp <= 0x0948) return matra(P::Above);
    if (cp >= 0x0949 && cp <= 0x094C) return matra(P::Right);
    if (cp >= 0x0958 && cp <= 0x095F) return {K::Consonant};
    if (cp >= 0x0966 && cp <= 0x096F) return {K::Digit, P::Right, static_cast<int>(cp - 0x0966)};
    if (cp >= 0x0972 && cp <= 0x0977) return {K::IndependentVowel};
    if (cp >= 0x0978) return {K::Consonant};
    // 0950 om, 0951-0954 accents, 0964/0965 dandas, 0970/0971 signs
    return {};
}

const char* to_string(ClassKind kind) noexcept {
    switch (kind) {
        case ClassKind::IndependentVowel: return "IndependentVowel";
        case ClassKind::Consonant: return "Consonant";
        case ClassKind::DependentVowelSign: return "DependentVowelSign";
        case ClassKind::Virama: return "Virama";
        case ClassKind::Nukta: return "Nukta";
        case ClassKind::CombiningSign: return "CombiningSign";
        case ClassKind::Digit: return "Digit";
        case ClassKind::Other: return "Other";
    }
    return "Other";
}

std::u32string utf8_to_u32(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    while (i < text.size()) {
        const unsigned char b0 = byte(i);
        int len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        if (i + len > text.size()) {
            out.push_back(kReplacement);
            break;
        }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const unsigned char b = byte(i + k);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr std::array<char32_t, 5> kMin{0, 0, 0x80, 0x800, 0x10000};
        if (!ok || cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string u32_to_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::string u32_to_utf8(std::u32string_view text) {
    std::string out;
    out.reserve(text.size() * 3);
    for (char32_t cp : text) out += u32_to_utf8(cp);
    return out;
}

std::string normalize(std::string_view text) {
    std::u32string stripped;
    for (char32_t cp : utf8_to_u32(text))
        if (cp != kZwj && cp != kZwnj) stripped.push_back(cp);

    const auto src = icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(stripped.data()),
                                                  static_cast<int32_t>(stripped.size()));
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    icu::UnicodeString composed = U_SUCCESS(status) ? nfc->normalize(src, status) : src;
    if (U_FAILURE(status)) composed = src;

    std::string utf8;
    composed.toUTF8String(utf8);

    std::u32string out;
    bool pending_space = false;
    for (char32_t cp : utf8_to_u32(utf8)) {
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(U' ');
        pending_space = false;
        out.push_back(cp);
    }
    return u32_to_utf8(out);
}

int ChallengeText::max_conjunct_depth() const noexcept {
    int depth = 0;
    for (const auto& c : clusters) depth = std::max(depth, c.conjunct_depth);
    return depth;
}

std::vector<Cluster> segment_clusters(std::string_view normalized_text) {
    const std::u32string cps = utf8_to_u32(normalized_text);
    std::vector<Cluster> out;
    const std::size_t n = cps.size();
    const auto kind_at = [&](std::size_t k) {
        return k < n ? classify(cps[k]).kind : ClassKind::Other;
    };
    const auto fail = [&](std::size_t k, const char* why) {
        throw MalformedText(std::string("malformed Devanagari text at codepoint ") + std::to_string(k) +
                                ": " + why,
                            k);
    };

    std::size_t i = 0;
    while (i < n) {
        if (is_space(cps[i])) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        Cluster cluster;
        switch (kind_at(i)) {
            case ClassKind::Digit:
                cluster.kind = ClusterKind::Digit;
                ++i;
                break;
            case ClassKind::IndependentVowel:
                cluster.kind = ClusterKind::VowelSyllable;
                ++i;
                while (kind_at(i) == ClassKind::CombiningSign) ++i;
                break;
            case ClassKind::Consonant: {
                cluster.kind = ClusterKind::ConsonantSyllable;
                for (;;) {
                    ++i;  // consonant
                    ++cluster.conjunct_depth;
                    if (kind_at(i) == ClassKind::Nukta) ++i;
                    if (kind_at(i) != ClassKind::Virama) break;
                    if (kind_at(i + 1) != ClassKind::Consonant) fail(i, "virama not followed by a consonant");
                    ++i;  // virama
                }
                if (kind_at(i) == ClassKind::DependentVowelSign) ++i;
                while (kind_at(i) == ClassKind::CombiningSign) ++i;
                break;
            }
            case ClassKind::DependentVowelSign: fail(i, "vowel sign without a base"); break;
            case ClassKind::Virama: fail(i, "virama without a base"); break;
            case ClassKind::Nukta: fail(i, "nukta without a base"); break;
            case ClassKind::CombiningSign: fail(i, "combining sign without a base"); break;
            case ClassKind::Other: fail(i, "codepoint outside the cluster grammar"); break;
        }
        cluster.codepoints.assign(cps.begin() + static_cast<std::ptrdiff_t>(start),
                                  cps.begin() + static_cast<std::ptrdiff_t>(i));
        out.push_back(std::move(cluster));
    }
    return out;
}

ChallengeText make_challenge_text(std::string_view text) {
    ChallengeText ct;
    ct.normalized = normalize(text);
    std::size_t begin = 0;
    const std::string& s = ct.normalized;
    while (begin <= s.size()) {
        std::size_t end = s.find(' ', begin);
        if (end == std::string::npos) end = s.size();
        if (end > begin) {
            auto word = segment_clusters(std::string_view(s).substr(begin, end - begin));
            ct.word_sizes.push_back(word.size());
            for (auto& c : word) ct.clusters.push_back(std::move(c));
        }
        begin = end + 1;
    }
    return ct;
}

void GenerationWeights::validate() const {
    const double probs[] = {digit, vowel_syllable, consonant_syllable, conjunct_depth2,
                            conjunct_depth3, matra, combining_sign};
    for (double p : probs)
        if (!(p >= 0.0) || p > 1.0) throw std::invalid_argument("generation weight outside [0, 1]");
    if (digit + vowel_syllable + consonant_syllable <= 0.0)
        throw std::invalid_argument("generation weights select no cluster kind");
    if (conjunct_depth2 + conjunct_depth3 > 1.0)
        throw std::invalid_argument("conjunct depth probabilities exceed 1");
}

std::u32string_view simple_consonants() noexcept { return kConsonants; }
std::u32string_view simple_vowels() noexcept { return kVowels; }
std::u32string_view simple_matras() noexcept { return kMatras; }

Cluster random_cluster(Rng& rng, const GenerationWeights& weights) {
    weights.validate();
    const double kinds[] = {weights.digit, weights.vowel_syllable, weights.consonant_syllable};
    Cluster c;
    const auto pick = [&](std::u32string_view set) { return set[rng.below(set.size())]; };
    switch (rng.weighted(kinds)) {
        case 0:
            c.kind = ClusterKind::Digit;
            c.codepoints.push_back(static_cast<char32_t>(0x0966 + rng.below(10)));
            return c;
        case 1:
            c.kind = ClusterKind::VowelSyllable;
            c.codepoints.push_back(pick(kVowels));
            if (rng.chance(weights.combining_sign)) c.codepoints.push_back(pick(kGeneratedSigns));
            return c;
        default: break;
    }
    c.kind = ClusterKind::ConsonantSyllable;
    const double r = rng.uniform();
    c.conjunct_depth = r < weights.conjunct_depth3                            ? 3
                       : r < weights.conjunct_depth3 + weights.conjunct_depth2 ? 2
                                                                              : 1;
    for (int k = 0; k < c.conjunct_depth; ++k) {
        if (k > 0) c.codepoints.push_back(kVirama);
        c.codepoints.push_back(pick(kConsonants));
    }
    if (rng.chance(weights.matra)) c.codepoints.push_back(pick(kMatras));
    if (rng.chance(weights.combining_sign)) c.codepoints.push_back(pick(kGeneratedSigns));
    return c;
}

ChallengeText random_string(Rng& rng, std::size_t n_clusters, const GenerationWeights& weights) {
    if (n_clusters == 0) throw InvalidLength("random_string needs at least one cluster");
    ChallengeText ct;
    std::u32string all;
    for (std::size_t i = 0; i < n_clusters; ++i) {
        Cluster c = random_cluster(rng, weights);
        all += c.codepoints;
        ct.clusters.push_back(std::move(c));
    }
    ct.normalized = u32_to_utf8(all);
    ct.word_sizes.push_back(n_clusters);
    return ct;
}

}  // namespace deva
