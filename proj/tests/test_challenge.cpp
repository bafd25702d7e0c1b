#include <doctest.h>

#include <set>
#include <thread>

#include "deva/challenge.hpp"
#include "support.hpp"

using namespace deva;
using namespace std::chrono_literals;

namespace {

const std::string kSecret = "test secret with at least thirty-two bytes";

ChallengePolicy forced(SampleKind kind = SampleKind::ExistingWord) {
    ChallengePolicy p;
    p.force_kind = kind;
    return p;
}

struct Harness {
    Corpus corpus;
    Obfuscator obfuscator{testing::renderer()};
    ManualClock clock{TimePoint(1000h)};
    ChallengeEngine engine;

    explicit Harness(std::vector<std::string> pages = {"कर्मणि"}, ChallengePolicy policy = forced(),
                     StoreConfig store = {})
        : engine(load(corpus, pages), obfuscator, build_registry(RegistryConfig::defaults()), EpochPolicy{},
                 std::move(policy), kSecret, clock, std::move(store)) {}

    static const Corpus& load(Corpus& c, const std::vector<std::string>& pages) {
        for (std::size_t i = 0; i < pages.size(); ++i) c.ingest(pages[i], "page" + std::to_string(i));
        return c;
    }
};

}  // namespace

TEST_CASE("generate_spec is deterministic") {
    ChallengePolicy p;
    CHECK(generate_spec(5, p, kSecret, 9) == generate_spec(5, p, kSecret, 9));
    const ChallengeSpec s = generate_spec(5, p, kSecret, 9);
    CHECK(s.user_seed == 5);
    CHECK(s.nonce == 9);
    CHECK(s.ttl == p.ttl);
    CHECK(s.text_seed != s.obfuscation_seed);
}

TEST_CASE("generate_spec depends on the secret") {
    ChallengePolicy p;
    CHECK(generate_spec(5, p, kSecret, 9).text_seed != generate_spec(5, p, kSecret + "x", 9).text_seed);
}

TEST_CASE("forced kind") {
    ChallengePolicy p;
    p.force_kind = SampleKind::RandomString;
    for (std::uint64_t n = 0; n < 100; ++n) CHECK(generate_spec(1, p, kSecret, n).constraints.kind == SampleKind::RandomString);
}

TEST_CASE("different nonces give different text seeds") {
    ChallengePolicy p;
    std::set<std::uint64_t> seeds;
    for (std::uint64_t n = 0; n < 1000; ++n) seeds.insert(generate_spec(42, p, kSecret, n).text_seed);
    CHECK(seeds.size() == 1000);
}

TEST_CASE("kind mix follows the policy") {
    ChallengePolicy p;
    const int n = 20000;
    std::map<SampleKind, int> counts;
    for (int i = 0; i < n; ++i) counts[generate_spec(7, p, kSecret, static_cast<std::uint64_t>(i)).constraints.kind]++;
    const auto within = [&](SampleKind k, double expected) {
        const double sd = std::sqrt(n * expected * (1 - expected));
        return std::abs(counts[k] - n * expected) < 5 * sd;
    };
    CHECK(within(SampleKind::ExistingWord, 0.7));
    CHECK(within(SampleKind::RandomString, 0.2));
    CHECK(within(SampleKind::Phrase, 0.1));
}

TEST_CASE("policy validation") {
    ChallengePolicy p;
    p.ttl = 0s;
    CHECK_THROWS(p.validate());
    ChallengePolicy q;
    q.max_attempts = 0;
    CHECK_THROWS(q.validate());
    ChallengePolicy r;
    r.existing_word = r.random_string = r.phrase = 0;
    CHECK_THROWS(r.validate());
}

TEST_CASE("issue then verify: pass, then already used") {
    Harness h;
    const IssuedChallenge c = h.engine.issue(generate_spec(1, h.engine.policy(), kSecret, 1));
    CHECK(c.answer == "कर्मणि");
    CHECK(c.challenge.id.size() == 32);
    CHECK(c.challenge.state == ChallengeState::Pending);
    CHECK(!c.png.empty());
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::Pass);
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::AlreadyUsed);
    CHECK(h.engine.store().find(c.challenge.id)->state == ChallengeState::Consumed);
}

TEST_CASE("wrong answer fails and exhausts attempts") {
    Harness h;
    const IssuedChallenge c = h.engine.issue_for(3);
    CHECK(h.engine.verify(c.challenge.id, "abc") == VerifyResult::Fail);
    CHECK(h.engine.store().find(c.challenge.id)->attempts == 1);
    CHECK(h.engine.verify(c.challenge.id, "योग") == VerifyResult::Fail);
    CHECK(h.engine.verify(c.challenge.id, "") == VerifyResult::Fail);
    CHECK(h.engine.store().find(c.challenge.id)->state == ChallengeState::Expired);
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::Expired);
}

TEST_CASE("correct answer after expiry is expired") {
    Harness h;
    const IssuedChallenge c = h.engine.issue_for(3);
    CHECK(c.challenge.expires_at - c.challenge.issued_at == h.engine.policy().ttl);
    h.clock.advance(h.engine.policy().ttl);
    h.clock.advance(1ms);
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::Expired);
    CHECK(h.engine.store().find(c.challenge.id)->state == ChallengeState::Expired);
}

TEST_CASE("answer at exactly the expiry instant still passes") {
    Harness h;
    const IssuedChallenge c = h.engine.issue_for(3);
    h.clock.set(c.challenge.expires_at);
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::Pass);
}

TEST_CASE("unknown id") {
    Harness h;
    CHECK(h.engine.verify("00000000000000000000000000000000", "कर्मणि") == VerifyResult::Unknown);
}

TEST_CASE("same spec and clock give identical image bytes") {
    Harness h({"कर्मणि योग धर्म क्षेत्रे"}, ChallengePolicy{});
    for (std::uint64_t n = 0; n < 10; ++n) {
        const ChallengeSpec spec = generate_spec(9, h.engine.policy(), kSecret, n);
        const IssuedChallenge a = h.engine.issue(spec);
        const IssuedChallenge b = h.engine.issue(spec);
        CHECK(a.png == b.png);
        CHECK(a.answer == b.answer);
        CHECK(a.challenge.id != b.challenge.id);
    }
}

TEST_CASE("empty corpus propagates NoCandidate") {
    Harness h(std::vector<std::string>{});
    CHECK_THROWS_AS(h.engine.issue_for(1), NoCandidate);
    CHECK(h.engine.store().size() == 0);
}

TEST_CASE("random strings need no corpus") {
    Harness h(std::vector<std::string>{}, forced(SampleKind::RandomString));
    const IssuedChallenge c = h.engine.issue_for(1);
    CHECK(h.engine.verify(c.challenge.id, c.answer) == VerifyResult::Pass);
}

TEST_CASE("verification is by normalized text") {
    Harness h;
    const std::vector<std::pair<std::string, VerifyResult>> cases = {
        {"  कर्मणि ", VerifyResult::Pass},
        {"कर्‍मणि", VerifyResult::Pass},
        {"कर्‌मणि\n", VerifyResult::Pass},
        {"कर्मण", VerifyResult::Fail},
        {"कर्मणी", VerifyResult::Fail},
    };
    for (const auto& [answer, expected] : cases) {
        const IssuedChallenge c = h.engine.issue_for(1);
        CHECK_MESSAGE(h.engine.verify(c.challenge.id, answer) == expected, answer);
    }
}

TEST_CASE("normalization equivalence over phrases with perturbed whitespace") {
    Harness h({"कर्मणि योग धर्म क्षेत्रे कुरु"}, forced(SampleKind::Phrase));
    Rng rng(4);
    for (int i = 0; i < 30; ++i) {
        const IssuedChallenge c = h.engine.issue_for(rng.next());
        std::string noisy = " ";
        for (char ch : c.answer) noisy += ch == ' ' ? std::string("\t  ") : std::string(1, ch);
        noisy += "‍ ";
        CHECK(h.engine.verify(c.challenge.id, noisy) == VerifyResult::Pass);
    }
}

TEST_CASE("refresh supersedes the original") {
    Harness h;
    const IssuedChallenge old = h.engine.issue_for(8);
    const IssuedChallenge fresh = h.engine.refresh(old.challenge.id);
    CHECK(fresh.challenge.id != old.challenge.id);
    CHECK(fresh.challenge.user_seed == old.challenge.user_seed);
    CHECK(h.engine.store().find(old.challenge.id)->state == ChallengeState::Superseded);
    CHECK(h.engine.verify(old.challenge.id, "कर्मणि") == VerifyResult::AlreadyUsed);
    CHECK(h.engine.verify(fresh.challenge.id, "कर्मणि") == VerifyResult::Pass);
    CHECK_THROWS_AS(h.engine.refresh("ffffffffffffffffffffffffffffffff"), UnknownChallenge);
}

TEST_CASE("refresh of a terminal challenge keeps its state") {
    Harness h;
    const IssuedChallenge old = h.engine.issue_for(8);
    REQUIRE(h.engine.verify(old.challenge.id, "कर्मणि") == VerifyResult::Pass);
    const IssuedChallenge fresh = h.engine.refresh(old.challenge.id);
    CHECK(h.engine.store().find(old.challenge.id)->state == ChallengeState::Consumed);
    CHECK(fresh.challenge.state == ChallengeState::Pending);
}

TEST_CASE("refresh hook can refuse") {
    ChallengePolicy p = forced();
    p.allow_refresh = [](const std::string&) { return false; };
    Harness h({"कर्मणि"}, p);
    const IssuedChallenge old = h.engine.issue_for(8);
    CHECK_THROWS_AS(h.engine.refresh(old.challenge.id), RefreshDenied);
    CHECK(h.engine.store().find(old.challenge.id)->state == ChallengeState::Pending);
}

TEST_CASE("state transitions only leave Pending and attempts never decrease") {
    Harness h;
    Rng rng(12);
    const char* answers[] = {"कर्मणि", "abc", "योग"};
    for (int round = 0; round < 50; ++round) {
        const IssuedChallenge c = h.engine.issue_for(rng.next());
        ChallengeState prev = ChallengeState::Pending;
        int attempts = 0;
        for (int step = 0; step < 6; ++step) {
            switch (rng.below(4)) {
                case 0: h.engine.verify(c.challenge.id, answers[rng.below(3)]); break;
                case 1: h.clock.advance(std::chrono::seconds(rng.below(60))); break;
                case 2: h.engine.refresh(c.challenge.id); break;
                default: h.engine.verify(c.challenge.id, "abc"); break;
            }
            const auto now = h.engine.store().find(c.challenge.id);
            if (!now) break;
            if (prev != ChallengeState::Pending) CHECK(now->state == prev);
            CHECK(now->attempts >= attempts);
            prev = now->state;
            attempts = now->attempts;
        }
    }
}

TEST_CASE("expired and finished challenges are evicted after retention") {
    StoreConfig sc;
    sc.retention = 60s;
    Harness h({"कर्मणि"}, forced(), sc);
    const IssuedChallenge c = h.engine.issue_for(1);
    h.clock.advance(h.engine.policy().ttl + 61s);
    CHECK(h.engine.store().sweep(h.clock.now()) == 1);
    CHECK(h.engine.verify(c.challenge.id, "कर्मणि") == VerifyResult::Unknown);
}

TEST_CASE("store capacity is enforced") {
    StoreConfig sc;
    sc.capacity = 3;
    sc.retention = 0s;
    Harness h({"कर्मणि"}, forced(), sc);
    for (int i = 0; i < 3; ++i) h.engine.issue_for(static_cast<std::uint64_t>(i));
    CHECK_THROWS_AS(h.engine.issue_for(9), StoreFull);
    CHECK(h.engine.store().size() == 3);
    h.clock.advance(h.engine.policy().ttl + 1s);
    CHECK_NOTHROW(h.engine.issue_for(9));
    CHECK(h.engine.store().size() == 1);
}

TEST_CASE("at most one pass under concurrent verification") {
    Harness h;
    for (int round = 0; round < 20; ++round) {
        const IssuedChallenge c = h.engine.issue_for(static_cast<std::uint64_t>(round));
        std::atomic<int> passes{0}, used{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 32; ++t)
            threads.emplace_back([&] {
                const VerifyResult r = h.engine.verify(c.challenge.id, "कर्मणि");
                if (r == VerifyResult::Pass) ++passes;
                if (r == VerifyResult::AlreadyUsed) ++used;
            });
        for (auto& t : threads) t.join();
        CHECK(passes == 1);
        CHECK(used == 31);
    }
}

TEST_CASE("persistence replays state and never stores the answer") {
    testing::TempDir dir;
    StoreConfig sc;
    sc.persistence_path = dir / "challenges.jsonl";
    std::string pending_id, consumed_id;
    {
        Harness h({"कर्मणि"}, forced(), sc);
        pending_id = h.engine.issue_for(1).challenge.id;
        consumed_id = h.engine.issue_for(2).challenge.id;
        REQUIRE(h.engine.verify(consumed_id, "कर्मणि") == VerifyResult::Pass);
        REQUIRE(h.engine.verify(pending_id, "abc") == VerifyResult::Fail);
    }
    const std::string log = testing::read_text(*sc.persistence_path);
    CHECK(log.find("कर्मणि") == std::string::npos);

    Harness h({"कर्मणि"}, forced(), sc);
    REQUIRE(h.engine.store().size() == 2);
    CHECK(h.engine.store().find(pending_id)->attempts == 1);
    CHECK(h.engine.verify(consumed_id, "कर्मणि") == VerifyResult::AlreadyUsed);
    CHECK(h.engine.verify(pending_id, "कर्मणि") == VerifyResult::Pass);
}

TEST_CASE("a torn final log line is ignored on replay") {
    testing::TempDir dir;
    StoreConfig sc;
    sc.persistence_path = dir / "challenges.jsonl";
    std::string id;
    {
        Harness h({"कर्मणि"}, forced(), sc);
        id = h.engine.issue_for(1).challenge.id;
    }
    {
        std::ofstream out(*sc.persistence_path, std::ios::app);
        out << "{\"op\":\"state\",\"id\":\"" << id;
    }
    Harness h({"कर्मणि"}, forced(), sc);
    CHECK(h.engine.verify(id, "कर्मणि") == VerifyResult::Pass);
}

TEST_CASE("answers survive every active subset") {
    Harness h({"कर्मणि योग धर्म क्षेत्रे कुरु पाण्डव संजय उवाच"}, ChallengePolicy{});
    Rng rng(31);
    for (int epoch = 0; epoch < 30; ++epoch) {
        h.clock.set(TimePoint(std::chrono::hours(24 * epoch)));
        for (int i = 0; i < 5; ++i) {
            const IssuedChallenge c = h.engine.issue_for(rng.next());
            CHECK(h.engine.verify(c.challenge.id, c.answer) == VerifyResult::Pass);
        }
    }
}

TEST_CASE("challenge ids are unique hex") {
    std::set<std::string> ids;
    for (int i = 0; i < 1000; ++i) {
        const std::string id = new_challenge_id();
        CHECK(id.size() == 32);
        CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
        ids.insert(id);
    }
    CHECK(ids.size() == 1000);
}
