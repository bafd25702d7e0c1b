#include <doctest.h>

#include <set>

#include "deva/script.hpp"
#include "oracle/grammar_oracle.hpp"
#include "support.hpp"

using namespace deva;

namespace {

char letter_of(char32_t cp) {
    switch (classify(cp).kind) {
        case ClassKind::Consonant: return 'k';
        case ClassKind::IndependentVowel: return 'v';
        case ClassKind::DependentVowelSign: return 'm';
        case ClassKind::Virama: return 'h';
        case ClassKind::Nukta: return 'n';
        case ClassKind::CombiningSign: return 'c';
        case ClassKind::Digit: return 'd';
        case ClassKind::Other: return 'x';
    }
    return '?';
}

// Compares segment_clusters against the oracle on one string.
void check_against_oracle(const std::u32string& text) {
    const oracle::Match expected = oracle::segment(text);
    const std::string utf8 = u32_to_utf8(text);
    if (expected.error_at) {
        try {
            segment_clusters(utf8);
            FAIL_CHECK("accepted text the oracle rejects: " << utf8);
        } catch (const MalformedText& e) {
            CHECK_MESSAGE(e.offset() == *expected.error_at, utf8);
        }
        return;
    }
    std::vector<Cluster> got;
    REQUIRE_NOTHROW_MESSAGE(got = segment_clusters(utf8), utf8);
    REQUIRE_MESSAGE(got.size() == expected.clusters.size(), utf8);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK_MESSAGE(got[i].codepoints == expected.clusters[i], utf8);
}

}  // namespace

TEST_CASE("classify examples") {
    CHECK(classify(U'क').kind == ClassKind::Consonant);
    CHECK(classify(U'ि') == CodepointClass{ClassKind::DependentVowelSign, MatraPosition::Left, -1});
    CHECK(classify(U'०').kind == ClassKind::Digit);
    CHECK(classify(U'०').digit_value == 0);
    CHECK(classify(U'A').kind == ClassKind::Other);
}

TEST_CASE("classify agrees with the Unicode syllabic category over the block") {
    for (char32_t cp = kDevanagariFirst; cp <= kDevanagariLast; ++cp)
        CHECK_MESSAGE(letter_of(cp) == oracle::class_letter(cp), "U+" << std::hex << static_cast<unsigned>(cp));
}

TEST_CASE("classify is total outside the block") {
    for (char32_t cp : {U'\0', U'a', U' ', U'ࣿ', U'ঀ', U'‍', U'\U0001F600'})
        CHECK(classify(cp).kind == ClassKind::Other);
}

TEST_CASE("digits map to 0..9 bijectively") {
    std::set<int> seen;
    for (char32_t cp = 0x0966; cp <= 0x096F; ++cp) {
        const CodepointClass c = classify(cp);
        REQUIRE(c.kind == ClassKind::Digit);
        CHECK(c.digit_value == static_cast<int>(cp - 0x0966));
        seen.insert(c.digit_value);
    }
    CHECK(seen.size() == 10);
    int digits = 0;
    for (char32_t cp = kDevanagariFirst; cp <= kDevanagariLast; ++cp) digits += classify(cp).kind == ClassKind::Digit;
    CHECK(digits == 10);
}

TEST_CASE("normalize examples") {
    CHECK(normalize("  कर्मणि ") == "कर्मणि");
    CHECK(normalize("क‍्य") == "क्य");
    CHECK(normalize("क‌्य") == "क्य");
    CHECK(normalize("") == "");
    CHECK(normalize("कर्मणि \t\n योग") == "कर्मणि योग");
    CHECK(normalize("\u0958") == "\u0915\u093C");
}

TEST_CASE("normalize is idempotent") {
    Rng rng(5);
    const std::u32string alphabet = U"कखगघङचछजझञटठडढणतथदधनपफबभमयरलवशषसहअआइईउऊऋएऐओऔािीुूृेैोौ्ँंः़० \t‍‌abक़ऩ";
    for (int t = 0; t < 2000; ++t) {
        std::u32string s;
        const auto len = rng.below(20);
        for (std::uint64_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
        const std::string once = normalize(u32_to_utf8(s));
        CHECK(normalize(once) == once);
    }
}

TEST_CASE("segment examples") {
    const auto clusters = segment_clusters("कर्मणि");
    REQUIRE(clusters.size() == 3);
    CHECK(clusters[0].utf8() == "क");
    CHECK(clusters[1].utf8() == "र्म");
    CHECK(clusters[2].utf8() == "णि");
    CHECK(clusters[1].conjunct_depth == 2);

    const auto kya = segment_clusters("क्य");
    REQUIRE(kya.size() == 1);
    CHECK(kya[0].conjunct_depth == 2);

    CHECK_THROWS_AS(segment_clusters("ि"), MalformedText);
    try {
        segment_clusters("क्");
        FAIL_CHECK("dangling virama accepted");
    } catch (const MalformedText& e) {
        CHECK(e.offset() == 1);
    }
    CHECK_THROWS_AS(segment_clusters("्क"), MalformedText);
}

TEST_CASE("segment partitions the non-space codepoints") {
    const ChallengeText t = make_challenge_text(" कर्मणि  योग ");
    CHECK(t.normalized == "कर्मणि योग");
    CHECK(t.size() == 5);
    CHECK(t.word_sizes == std::vector<std::size_t>{3, 2});
    std::u32string joined;
    for (const auto& c : t.clusters) joined += c.codepoints;
    CHECK(joined == U"कर्मणियोग");
}

TEST_CASE("grammar oracle equivalence on fuzz strings") {
    std::u32string block;
    for (char32_t cp = kDevanagariFirst; cp <= kDevanagariLast; ++cp) block.push_back(cp);
    const std::u32string pools[] = {
        std::u32string(simple_consonants()) + U"क़ख़ग़",  // k
        std::u32string(simple_vowels()),                 // v
        std::u32string(simple_matras()),                 // m
        U"्",                                            // h
        U"़",                                            // n
        U"ँंः",                                          // c
        U"०१२३४५६७८९",                                   // d
    };
    const double class_weights[] = {0.35, 0.08, 0.15, 0.2, 0.06, 0.06, 0.04, 0.06};
    Rng rng(20240611);
    for (int t = 0; t < 10000; ++t) {
        std::u32string s;
        const auto len = 1 + rng.below(12);
        const bool structured = t % 2 == 0;
        for (std::uint64_t i = 0; i < len; ++i) {
            if (!structured) {
                const auto r = rng.below(100);
                s.push_back(r < 3 ? U' ' : r < 5 ? U'A' : block[rng.below(block.size())]);
                continue;
            }
            const std::size_t k = rng.weighted(class_weights);
            if (k == 7) {
                s.push_back(rng.chance(0.5) ? U' ' : U'।');
            } else {
                s.push_back(pools[k][rng.below(pools[k].size())]);
            }
        }
        check_against_oracle(s);
    }
}

TEST_CASE("grammar oracle equivalence on every corpus word") {
    const auto words = testing::sample_words();
    REQUIRE(words.size() > 100);
    for (const auto& w : words) check_against_oracle(utf8_to_u32(w));
}

TEST_CASE("random_cluster determinism and forced branches") {
    Rng a(7), b(7);
    CHECK(random_cluster(a) == random_cluster(b));

    GenerationWeights digits;
    digits.digit = 1.0;
    digits.vowel_syllable = 0.0;
    digits.consonant_syllable = 0.0;
    Rng r(1);
    for (int i = 0; i < 100; ++i) {
        const Cluster c = random_cluster(r, digits);
        REQUIRE(c.codepoints.size() == 1);
        CHECK(classify(c.codepoints[0]).kind == ClassKind::Digit);
    }
}

TEST_CASE("conjunct probability zero yields no conjuncts") {
    GenerationWeights w;
    w.conjunct_depth2 = 0.0;
    w.conjunct_depth3 = 0.0;
    Rng r(99);
    for (int i = 0; i < 10000; ++i) REQUIRE(random_cluster(r, w).conjunct_depth < 2);
}

TEST_CASE("random clusters satisfy the grammar") {
    Rng r(123);
    for (int i = 0; i < 5000; ++i) {
        const Cluster c = random_cluster(r);
        const oracle::Match m = oracle::segment(c.codepoints);
        REQUIRE(!m.error_at);
        CHECK(m.clusters.size() == 1);
    }
}

TEST_CASE("random_string examples") {
    Rng a(3), b(3);
    const ChallengeText t = random_string(a, 5);
    CHECK(t.size() == 5);
    CHECK(segment_clusters(t.normalized).size() == 5);
    CHECK(random_string(b, 5).normalized == t.normalized);
    Rng c(3);
    CHECK_THROWS_AS(random_string(c, 0), InvalidLength);
}

TEST_CASE("random_string round trip") {
    for (std::size_t n = 1; n <= 12; ++n) {
        for (std::uint64_t s = 0; s < 200; ++s) {
            Rng rng(s);
            const ChallengeText t = random_string(rng, n);
            REQUIRE(segment_clusters(t.normalized).size() == n);
            REQUIRE(make_challenge_text(t.normalized).size() == n);
        }
    }
}

TEST_CASE("generation weights validation") {
    GenerationWeights w;
    w.digit = -0.1;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    GenerationWeights none;
    none.digit = none.vowel_syllable = none.consonant_syllable = 0.0;
    CHECK_THROWS_AS(none.validate(), std::invalid_argument);
}

TEST_CASE("generator sets have the documented sizes") {
    CHECK(simple_consonants().size() == 33);
    CHECK(simple_vowels().size() == 11);
    CHECK(simple_matras().size() == 10);
}
