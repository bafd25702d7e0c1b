#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deva/rng.hpp"
#include "deva/script.hpp"

namespace deva {

class EmptyPage : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoCandidate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Page {
    std::string id;  // 16 hex digits, content-derived
    std::string source;
    std::string text;  // normalized

    friend bool operator==(const Page&, const Page&) = default;
};

struct WordEntry {
    std::set<std::string> pages;
    std::uint64_t count = 0;
    std::size_t clusters = 0;
    int conjunct_depth = 0;  // max over the word's clusters

    friend bool operator==(const WordEntry&, const WordEntry&) = default;
};

/// Inverted word -> page index. A pure function of the page set.
struct WordIndex {
    std::map<std::string, WordEntry> entries;
    std::map<std::size_t, std::set<std::string>> buckets;  // cluster count -> words

    friend bool operator==(const WordIndex&, const WordIndex&) = default;
};

enum class SampleKind { ExistingWord, RandomString, Phrase };

const char* to_string(SampleKind kind) noexcept;

struct SampleConstraints {
    std::size_t min_clusters = 2;
    std::size_t max_clusters = 6;
    SampleKind kind = SampleKind::ExistingWord;
    std::size_t phrase_words = 2;
    bool prefer_conjuncts = false;
    double conjunct_weight = 4.0;  // relative draw weight of conjunct words when preferred
    GenerationWeights weights{};

    void validate() const;
    friend bool operator==(const SampleConstraints& a, const SampleConstraints& b) {
        return a.min_clusters == b.min_clusters && a.max_clusters == b.max_clusters && a.kind == b.kind &&
               a.phrase_words == b.phrase_words && a.prefer_conjuncts == b.prefer_conjuncts;
    }
};

struct CorpusStats {
    std::size_t pages = 0;
    std::size_t words = 0;
    std::map<std::size_t, std::size_t> histogram;  // cluster count -> distinct words
};

struct IngestResult {
    std::string page_id;
    bool created = false;
    std::vector<std::string> skipped;  // tokens that failed cluster segmentation
};

/// Page store plus word index. Single writer, many readers.
///
/// On disk a corpus directory holds `pages.dat` (append-only, length-prefixed
/// records; the source of truth) and `index.dat` (derived, rebuilt when stale).
class Corpus {
public:
    Corpus() = default;
    /// Opens or creates a corpus directory.
    explicit Corpus(std::filesystem::path dir);

    Corpus(const Corpus&) = delete;
    Corpus& operator=(const Corpus&) = delete;

    /// Throws EmptyPage when no Devanagari word survives tokenization.
    std::string ingest(std::string_view text, std::string_view source);
    IngestResult ingest_detailed(std::string_view text, std::string_view source);
    /// Reads a UTF-8 file; throws CorpusError when it cannot be read.
    IngestResult ingest_file(const std::filesystem::path& path);

    /// Throws NoCandidate (ExistingWord/Phrase) when no indexed word satisfies the bounds.
    ChallengeText sample_word(const SampleConstraints& constraints, Rng& rng) const;

    CorpusStats stats() const;
    WordIndex index() const;
    std::vector<Page> pages() const;
    bool empty() const;

    /// Rebuild the index from pages and rewrite index.dat.
    void reindex();
    void save_index() const;

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

    /// Maximal runs of Devanagari letters, marks and digits.
    static std::vector<std::string> tokenize(std::string_view normalized_text);
    static WordIndex build_index(const std::vector<Page>& pages);
    static std::string page_id(std::string_view text, std::string_view source);

private:
    void load();
    void append_record(const Page& page) const;
    static void index_page(WordIndex& index, const Page& page, std::vector<std::string>* skipped);
    static std::string fingerprint(const std::map<std::string, Page>& pages);

    mutable std::shared_mutex mu_;
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, Page> pages_;
    WordIndex index_;
};

}  // namespace deva
