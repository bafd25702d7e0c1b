#include <doctest.h>

#include <numeric>

#include "deva/corpus.hpp"
#include "support.hpp"

using namespace deva;

TEST_CASE("ingest indexes each word against its page") {
    Corpus c;
    const std::string id = c.ingest("कर्मणि योग", "f1");
    CHECK(id.size() == 16);
    const WordIndex idx = c.index();
    REQUIRE(idx.entries.size() == 2);
    CHECK(idx.entries.at("कर्मणि").pages == std::set<std::string>{id});
    CHECK(idx.entries.at("योग").pages == std::set<std::string>{id});
    CHECK(idx.entries.at("कर्मणि").clusters == 3);
    CHECK(idx.entries.at("कर्मणि").conjunct_depth == 2);
}

TEST_CASE("ingest of text without Devanagari throws EmptyPage") {
    Corpus c;
    CHECK_THROWS_AS(c.ingest("hello world", "f2"), EmptyPage);
    CHECK(c.empty());
}

TEST_CASE("ingest is idempotent") {
    Corpus c;
    const std::string a = c.ingest("कर्मणि योग", "f1");
    const CorpusStats before = c.stats();
    const WordIndex idx = c.index();
    const std::string b = c.ingest("कर्मणि योग", "f1");
    CHECK(a == b);
    CHECK(c.stats().pages == before.pages);
    CHECK(c.stats().words == before.words);
    CHECK(c.index() == idx);
}

TEST_CASE("stats examples") {
    Corpus c;
    CorpusStats s = c.stats();
    CHECK(s.pages == 0);
    CHECK(s.words == 0);
    CHECK(s.histogram.empty());
    c.ingest("कर्मणि योग", "f1");
    s = c.stats();
    CHECK(s.pages == 1);
    CHECK(s.words == 2);
}

TEST_CASE("histogram sums to the distinct word count") {
    const CorpusStats s = testing::sample_corpus().stats();
    const std::size_t total = std::accumulate(s.histogram.begin(), s.histogram.end(), std::size_t{0},
                                              [](std::size_t acc, const auto& kv) { return acc + kv.second; });
    CHECK(total == s.words);
    CHECK(s.words > 100);
}

TEST_CASE("tokenize splits on anything outside Devanagari") {
    CHECK(Corpus::tokenize("राम, सीता; hello लक्ष्मण।") == std::vector<std::string>{"राम", "सीता", "लक्ष्मण"});
}

TEST_CASE("malformed tokens are skipped, not fatal") {
    Corpus c;
    const IngestResult r = c.ingest_detailed("योग िक", "f3");
    CHECK(r.created);
    CHECK(r.skipped == std::vector<std::string>{"िक"});
    CHECK(c.stats().words == 1);
}

TEST_CASE("sample_word: single qualifying word is forced") {
    Corpus c;
    c.ingest("कर्मणि", "f1");
    SampleConstraints k;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        CHECK(c.sample_word(k, rng).normalized == "कर्मणि");
    }
}

TEST_CASE("sample_word: empty corpus throws NoCandidate") {
    Corpus c;
    Rng rng(1);
    CHECK_THROWS_AS(c.sample_word(SampleConstraints{}, rng), NoCandidate);
    SampleConstraints phrase;
    phrase.kind = SampleKind::Phrase;
    CHECK_THROWS_AS(c.sample_word(phrase, rng), NoCandidate);
}

TEST_CASE("sample_word: out-of-bounds constraints throw NoCandidate") {
    Corpus c;
    c.ingest("योग", "f1");
    SampleConstraints k;
    k.min_clusters = 3;
    k.max_clusters = 4;
    Rng rng(1);
    CHECK_THROWS_AS(c.sample_word(k, rng), NoCandidate);
}

TEST_CASE("sample_word: random string of fixed length is deterministic") {
    Corpus c;
    SampleConstraints k;
    k.kind = SampleKind::RandomString;
    k.min_clusters = k.max_clusters = 4;
    Rng a(11), b(11);
    const ChallengeText t = c.sample_word(k, a);
    CHECK(t.size() == 4);
    CHECK(c.sample_word(k, b).normalized == t.normalized);
}

TEST_CASE("sample_word: phrase joins independent words with single spaces") {
    SampleConstraints k;
    k.kind = SampleKind::Phrase;
    k.phrase_words = 3;
    Rng rng(4);
    const ChallengeText t = testing::sample_corpus().sample_word(k, rng);
    CHECK(t.word_sizes.size() == 3);
    CHECK(std::count(t.normalized.begin(), t.normalized.end(), ' ') == 2);
    const auto& entries = testing::sample_corpus().index().entries;
    std::size_t begin = 0;
    for (int w = 0; w < 3; ++w) {
        const std::size_t end = std::min(t.normalized.find(' ', begin), t.normalized.size());
        CHECK(entries.count(t.normalized.substr(begin, end - begin)) == 1);
        begin = end + 1;
    }
}

TEST_CASE("sampling respects cluster bounds") {
    const Corpus& corpus = testing::sample_corpus();
    for (SampleKind kind : {SampleKind::ExistingWord, SampleKind::RandomString, SampleKind::Phrase}) {
        for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{2, 3}, {2, 6}, {4, 5}}) {
            SampleConstraints k;
            k.kind = kind;
            k.min_clusters = lo;
            k.max_clusters = hi;
            Rng rng(lo * 100 + hi);
            for (int i = 0; i < 1000; ++i) {
                const ChallengeText t = corpus.sample_word(k, rng);
                if (kind == SampleKind::Phrase) {
                    for (std::size_t n : t.word_sizes) REQUIRE((n >= lo && n <= hi));
                } else {
                    REQUIRE(t.word_sizes.size() == 1);
                    REQUIRE((t.size() >= lo && t.size() <= hi));
                }
            }
        }
    }
}

TEST_CASE("sampling is deterministic given the seed") {
    SampleConstraints k;
    Rng a(77), b(77);
    for (int i = 0; i < 50; ++i)
        CHECK(testing::sample_corpus().sample_word(k, a).normalized ==
              testing::sample_corpus().sample_word(k, b).normalized);
}

TEST_CASE("prefer_conjuncts raises the share of conjunct words") {
    const Corpus& corpus = testing::sample_corpus();
    const auto share = [&](bool prefer) {
        SampleConstraints k;
        k.prefer_conjuncts = prefer;
        Rng rng(5);
        int hits = 0;
        for (int i = 0; i < 2000; ++i) hits += corpus.sample_word(k, rng).max_conjunct_depth() >= 2;
        return hits / 2000.0;
    };
    CHECK(share(true) > share(false) + 0.1);
}

TEST_CASE("constraints validation") {
    SampleConstraints k;
    k.min_clusters = 0;
    CHECK_THROWS(k.validate());
    k.min_clusters = 5;
    k.max_clusters = 4;
    CHECK_THROWS(k.validate());
    SampleConstraints w;
    w.conjunct_weight = 0.0;
    CHECK_THROWS(w.validate());
}

TEST_CASE("index is a pure function of the pages") {
    const Corpus& corpus = testing::sample_corpus();
    CHECK(Corpus::build_index(corpus.pages()) == corpus.index());
}

TEST_CASE("index consistency: every listed page contains the word as a maximal run") {
    const Corpus& corpus = testing::sample_corpus();
    std::map<std::string, Page> pages;
    for (const auto& p : corpus.pages()) pages[p.id] = p;
    for (const auto& [word, entry] : corpus.index().entries) {
        REQUIRE(!entry.pages.empty());
        for (const auto& id : entry.pages) {
            const auto tokens = Corpus::tokenize(pages.at(id).text);
            CHECK(std::find(tokens.begin(), tokens.end(), word) != tokens.end());
        }
    }
}

TEST_CASE("corpus directory persists across reopen") {
    testing::TempDir dir;
    WordIndex idx;
    {
        Corpus c(dir.path());
        c.ingest("कर्मणि योग", "f1");
        c.ingest("धर्म क्षेत्रे", "f2");
        idx = c.index();
    }
    CHECK(std::filesystem::exists(dir / "pages.dat"));
    CHECK(std::filesystem::exists(dir / "index.dat"));
    Corpus reopened(dir.path());
    CHECK(reopened.stats().pages == 2);
    CHECK(reopened.index() == idx);
}

TEST_CASE("a stale or missing index is rebuilt from pages") {
    testing::TempDir dir;
    WordIndex idx;
    {
        Corpus c(dir.path());
        c.ingest("कर्मणि योग", "f1");
        idx = c.index();
    }
    std::filesystem::remove(dir / "index.dat");
    CHECK(Corpus(dir.path()).index() == idx);
    testing::write_text(dir / "index.dat", "garbage");
    CHECK(Corpus(dir.path()).index() == idx);
}

TEST_CASE("ingest_file reads UTF-8 files and rejects missing ones") {
    testing::TempDir dir;
    testing::write_text(dir / "a.txt", "कर्मणि योग\n");
    Corpus c;
    const IngestResult r = c.ingest_file(dir / "a.txt");
    CHECK(r.created);
    CHECK(c.stats().words == 2);
    CHECK_THROWS_AS(c.ingest_file(dir / "missing.txt"), CorpusError);
}
