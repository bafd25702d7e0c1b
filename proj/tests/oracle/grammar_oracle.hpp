#pragma once

// Independent cluster matcher. Classes come from ICU's Indic_Syllabic_Category property, and clusters are
// found by backtracking regex search over the class string, longest match first.

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <unicode/uchar.h>

namespace oracle {

/// One letter per grammar class; 'x' for anything outside the grammar.
inline char class_letter(char32_t cp) {
    if (cp < 0x0900 || cp > 0x097F) return 'x';
    switch (u_getIntPropertyValue(static_cast<UChar32>(cp), UCHAR_INDIC_SYLLABIC_CATEGORY)) {
        case U_INSC_CONSONANT: return 'k';
        case U_INSC_VOWEL_INDEPENDENT: return 'v';
        case U_INSC_VOWEL_DEPENDENT: return 'm';
        case U_INSC_VIRAMA: return 'h';
        case U_INSC_NUKTA: return 'n';
        case U_INSC_BINDU:
        case U_INSC_VISARGA: return 'c';
        case U_INSC_NUMBER: return 'd';
        default: return 'x';
    }
}

inline const std::regex& cluster_pattern() {
    static const std::regex re("d|vc*|(?:kn?h)*kn?m?c*");
    return re;
}

struct Match {
    std::vector<std::u32string> clusters;
    std::optional<std::size_t> error_at;  // codepoint index where no cluster starts
};

/// Partitions the non-space codepoints of `text` into clusters. Spaces are ' ' only.
inline Match segment(const std::u32string& text) {
    Match out;
    std::string letters;
    for (char32_t cp : text) letters.push_back(cp == U' ' ? ' ' : class_letter(cp));
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == U' ') {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < text.size() && text[end] != U' ') ++end;
        std::size_t best = 0;
        for (std::size_t len = end - i; len >= 1; --len) {
            if (std::regex_match(letters.begin() + static_cast<std::ptrdiff_t>(i),
                                 letters.begin() + static_cast<std::ptrdiff_t>(i + len), cluster_pattern())) {
                best = len;
                break;
            }
        }
        if (best == 0) {
            out.error_at = i;
            return out;
        }
        out.clusters.push_back(text.substr(i, best));
        i += best;
    }
    return out;
}

}  // namespace oracle
