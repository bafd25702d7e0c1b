// Acceptance runner: one PASS/FAIL line per primary criterion. Exit status is non-zero if any fails.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "deva/challenge.hpp"
#include "deva/eval.hpp"
#include "deva/image.hpp"
#include "deva/script.hpp"
#include "deva/service.hpp"
#include "oracle/grammar_oracle.hpp"
#include "support.hpp"

using namespace deva;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

const std::string kSecret = "acceptance secret, forty bytes long.....";

struct Verdict {
    bool pass = false;
    std::string detail;
};

Verdict verdict(bool pass, const std::ostringstream& detail) { return {pass, detail.str()}; }

struct Pipeline {
    Renderer renderer = Renderer::from_files(default_font_paths());
    Obfuscator obfuscator{renderer};
    TransformRegistry registry = build_registry(RegistryConfig::defaults());
};

ChallengePolicy word_policy() {
    ChallengePolicy p;
    p.force_kind = SampleKind::ExistingWord;
    return p;
}

std::unique_ptr<ChallengeEngine> make_engine(const Corpus& corpus, const Pipeline& p, const Clock& clock,
                                             ChallengePolicy policy = word_policy(), EpochPolicy epoch = {}) {
    return std::make_unique<ChallengeEngine>(corpus, p.obfuscator, p.registry, epoch, std::move(policy), kSecret,
                                             clock);
}

std::vector<std::string> pick_words(std::size_t count) {
    std::vector<std::string> words;
    for (const auto& w : testing::multi_cluster_words()) {
        const auto n = make_challenge_text(w).size();
        if (n >= 2 && n <= 6) words.push_back(w);
    }
    std::vector<std::string> out;
    const std::size_t step = std::max<std::size_t>(1, words.size() / count);
    for (std::size_t i = 0; i < words.size() && out.size() < count; i += step) out.push_back(words[i]);
    return out;
}

// Returns a description of the first disagreement, or nothing.
std::optional<std::string> oracle_mismatch(const std::u32string& text) {
    const oracle::Match expected = oracle::segment(text);
    const std::string utf8 = u32_to_utf8(text);
    try {
        const std::vector<Cluster> got = segment_clusters(utf8);
        if (expected.error_at) return "accepted " + utf8;
        if (got.size() != expected.clusters.size()) return "cluster count on " + utf8;
        for (std::size_t i = 0; i < got.size(); ++i)
            if (got[i].codepoints != expected.clusters[i]) return "cluster " + std::to_string(i) + " of " + utf8;
    } catch (const MalformedText& e) {
        if (!expected.error_at) return "rejected " + utf8;
        if (e.offset() != *expected.error_at) return "error offset on " + utf8;
    }
    return std::nullopt;
}

Verdict grammar_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t checked = 0, mismatches = 0;
    std::string first;
    auto check = [&](const std::u32string& s) {
        ++checked;
        if (auto m = oracle_mismatch(s)) {
            if (mismatches++ == 0) first = *m;
        }
    };

    std::u32string block;
    for (char32_t cp = kDevanagariFirst; cp <= kDevanagariLast; ++cp) block.push_back(cp);
    const std::u32string pools[] = {
        std::u32string(simple_consonants()) + U"क़ख़ग़", std::u32string(simple_vowels()), std::u32string(simple_matras()),
        U"्", U"़", U"ँंः", U"०१२३४५६७८९", U" ।",
    };
    const double weights[] = {0.35, 0.08, 0.15, 0.2, 0.06, 0.06, 0.04, 0.06};
    Rng rng(777);
    for (int t = 0; t < 10000; ++t) {
        std::u32string s;
        const auto len = 1 + rng.below(12);
        for (std::uint64_t i = 0; i < len; ++i) {
            if (t % 2) {
                s.push_back(block[rng.below(block.size())]);
            } else {
                const auto& pool = pools[rng.weighted(weights)];
                s.push_back(pool[rng.below(pool.size())]);
            }
        }
        check(s);
    }
    for (const auto& w : testing::sample_words()) check(utf8_to_u32(w));

    std::size_t round_trip_failures = 0;
    for (std::size_t n = 1; n <= 12; ++n) {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            Rng r(seed * 1000 + n);
            const ChallengeText t = random_string(r, n);
            if (t.size() != n || segment_clusters(t.normalized).size() != n) ++round_trip_failures;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::ostringstream d;
    d << checked << " strings, " << mismatches << " mismatches, " << round_trip_failures << "/2400 round-trip failures, "
      << secs << " s";
    if (!first.empty()) d << " (first: " << first << ")";
    return verdict(mismatches == 0 && round_trip_failures == 0 && secs < 30.0, d);
}

Verdict word_flow(const Pipeline& p) {
    Corpus corpus;
    corpus.ingest("कर्मणि", "flow");
    ManualClock clock(TimePoint(1000h));
    auto engine = make_engine(corpus, p, clock);

    const IssuedChallenge first = engine->issue_for(1);
    const Raster img = decode_png(first.png);
    const VerifyResult pass = engine->verify(first.challenge.id, "कर्मणि");
    const VerifyResult again = engine->verify(first.challenge.id, "कर्मणि");

    const IssuedChallenge second = engine->issue_for(2);
    clock.advance(engine->policy().ttl + 1s);
    const VerifyResult late = engine->verify(second.challenge.id, "कर्मणि");

    std::ostringstream d;
    d << "answer " << first.answer << ", image " << img.width << "x" << img.height << ", verify " << to_string(pass)
      << ", repeat " << to_string(again) << ", after ttl " << to_string(late);
    return verdict(first.answer == "कर्मणि" && pass == VerifyResult::Pass && again == VerifyResult::AlreadyUsed &&
                       late == VerifyResult::Expired,
                   d);
}

std::vector<std::vector<std::uint8_t>> full_run(int seeds) {
    Pipeline p;
    Corpus corpus;
    corpus.ingest_file(testing::sample_corpus_file());
    ManualClock clock(TimePoint(1000h));
    ChallengePolicy policy;
    auto engine = make_engine(corpus, p, clock, policy);
    std::vector<std::vector<std::uint8_t>> out;
    for (int s = 0; s < seeds; ++s)
        out.push_back(engine->issue(generate_spec(static_cast<std::uint64_t>(s), policy, kSecret, 0)).png);
    return out;
}

Verdict determinism() {
    const auto a = full_run(50);
    const auto b = full_run(50);
    int same = 0;
    std::set<std::vector<std::uint8_t>> distinct;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same += a[i] == b[i];
        distinct.insert(a[i]);
    }
    std::ostringstream d;
    d << same << "/50 identical PNGs, " << distinct.size() << " distinct images";
    return verdict(same == 50 && distinct.size() > 1, d);
}

Verdict registry_bounds(const Pipeline& p) {
    const TransformRegistry& reg = p.registry;
    std::set<TransformFamily> families;
    for (const auto& inst : reg.instances) families.insert(inst.family);

    EpochPolicy policy;
    bool sized = true, stable = true;
    int differing = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        policy.rotation_seed = seed;
        const auto e0 = active_subset(reg, policy, 0);
        const auto e1 = active_subset(reg, policy, 1);
        sized = sized && e0.size() == policy.m && e1.size() == policy.m && policy.m < reg.size();
        stable = stable && e0 == active_subset(reg, policy, 0);
        differing += e0 != e1;
    }
    std::ostringstream d;
    d << "N=" << reg.size() << ", families " << families.size() << "/11, m=" << policy.m
      << (sized ? "" : " (size mismatch)") << (stable ? "" : " (unstable)") << ", epochs differ for " << differing
      << "/100 seeds";
    return verdict(reg.size() >= kMinRegistrySize && reg.size() <= kMaxRegistrySize && families.size() == 11 && sized &&
                       stable && differing >= 95,
                   d);
}

Verdict answer_preservation(const Pipeline& p) {
    const auto words = pick_words(20);
    int passes = 0, total = 0;
    std::string first_failure;
    for (const auto& word : words) {
        Corpus corpus;
        corpus.ingest(word, "one");
        ManualClock clock(TimePoint(1000h));
        EpochPolicy epoch;
        epoch.rotation_seed = 4242;
        auto engine = make_engine(corpus, p, clock, word_policy(), epoch);
        for (int e = 0; e < 100; ++e) {
            clock.set(TimePoint(1000h) + e * epoch.epoch_length);
            const IssuedChallenge c = engine->issue_for(static_cast<std::uint64_t>(e));
            const VerifyResult r = engine->verify(c.challenge.id, word);
            ++total;
            if (r == VerifyResult::Pass) ++passes;
            else if (first_failure.empty()) first_failure = word + " epoch " + std::to_string(e) + ": " + to_string(r);
        }
    }
    std::ostringstream d;
    d << passes << "/" << total << " verified Pass over " << words.size() << " words x 100 epochs";
    if (!first_failure.empty()) d << " (first failure " << first_failure << ")";
    return verdict(words.size() == 20 && passes == total, d);
}

Verdict segmentation_gap(const Pipeline& p) {
    EvalOptions opts;
    opts.n = 100;
    opts.ablations = false;
    const auto start = std::chrono::steady_clock::now();
    const AttackReport r = evaluate_segmentation(testing::sample_corpus(), p.renderer, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::ostringstream d;
    d << "difficulty " << r.difficulty << ": clean " << r.clean_exact_rate << " (need >= 0.8), obfuscated "
      << r.obfuscated_exact_rate << " (need <= clean - 0.4), " << secs << " s";
    return verdict(r.clean_exact_rate >= 0.8 && r.obfuscated_exact_rate <= r.clean_exact_rate - 0.4 && secs < 120.0,
                   d);
}

void segmentation_frontier(const Pipeline& p) {
    for (double difficulty : {0.0, 0.3, 0.8, 1.0}) {
        EvalOptions opts;
        opts.n = 100;
        opts.ablations = false;
        opts.difficulty = difficulty;
        const AttackReport r = evaluate_segmentation(testing::sample_corpus(), p.renderer, opts);
        std::printf("info  frontier difficulty %.1f: clean %.2f, obfuscated %.2f\n", difficulty, r.clean_exact_rate,
                    r.obfuscated_exact_rate);
    }
}

Verdict coverage_window(const Pipeline& p) {
    const auto words = testing::multi_cluster_words();
    const std::size_t step = std::max<std::size_t>(1, words.size() / 100);
    int samples = 0, outside = 0;
    double lo = 1.0, hi = 0.0;
    EpochPolicy epoch;
    for (std::size_t i = 0, taken = 0; i < words.size() && taken < 100; i += step, ++taken) {
        const ChallengeText text = make_challenge_text(words[i]);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            epoch.rotation_seed = seed;
            const auto subset = active_subset(p.registry, epoch, i);
            const double c = ink_coverage(p.obfuscator.apply(text, subset, seed * 7919 + i).raster);
            lo = std::min(lo, c);
            hi = std::max(hi, c);
            outside += c < 0.02 || c > 0.5;
            ++samples;
        }
    }
    std::ostringstream d;
    d << samples << " samples, coverage range [" << lo << ", " << hi << "], " << outside << " outside [0.02, 0.5]";
    return verdict(samples == 1000 && outside == 0, d);
}

Verdict service_lifecycle() {
    testing::TempDir dir;
    {
        Corpus c(dir / "corpus");
        c.ingest("कर्मणि", "seed");
        c.save_index();
    }
    ServiceConfig config;
    config.port = 0;
    config.corpus_dir = dir / "corpus";
    config.font_paths = default_font_paths();
    config.secret = kSecret;
    config.challenge.force_kind = SampleKind::ExistingWord;
    config.store.retention = 60s;

    ManualClock clock(TimePoint(1700000000s));
    Service service(config, clock);
    const int port = service.bind();
    std::thread server([&] { service.run(); });
    for (int i = 0; i < 500 && !service.running(); ++i) std::this_thread::sleep_for(2ms);

    auto client = [port] {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(30);
        return c;
    };
    auto issue = [&]() -> std::pair<int, std::string> {
        auto r = client().Post("/api/v1/challenge", "", "application/json");
        if (!r) return {0, ""};
        return {r->status, r->status == 200 ? json::parse(r->body).at("challenge_id").get<std::string>() : ""};
    };
    auto verify = [&](const std::string& id) -> std::string {
        auto r = client().Post("/api/v1/verify", json{{"challenge_id", id}, {"answer", "कर्मणि"}}.dump(),
                               "application/json");
        return r && r->status == 200 ? json::parse(r->body).value("result", "") : "error";
    };

    std::ostringstream d;
    bool ok = service.running();

    int single_pass_rounds = 0;
    for (int round = 0; round < 3; ++round) {
        const std::string id = issue().second;
        std::atomic<int> pass{0}, used{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 32; ++t)
            threads.emplace_back([&] {
                const std::string r = verify(id);
                pass += r == "pass";
                used += r == "already_used";
            });
        for (auto& t : threads) t.join();
        single_pass_rounds += pass == 1 && used == 31;
    }
    d << "single pass under 32 verifiers in " << single_pass_rounds << "/3 rounds";
    ok = ok && single_pass_rounds == 3;

    clock.advance(1min);
    const std::string stale = issue().second;
    clock.advance(config.challenge.ttl + config.store.retention + 1s);
    issue();
    const std::string evicted = verify(stale);
    d << ", after eviction " << evicted;
    ok = ok && evicted == "unknown";

    clock.advance(1min);
    int first_429 = 0;
    for (int i = 1; i <= 12 && !first_429; ++i)
        if (issue().first == 429) first_429 = i;
    d << ", first 429 at request " << first_429;
    ok = ok && first_429 == 11;

    clock.advance(1min);
    const std::string old = issue().second;
    auto refreshed = client().Post("/api/v1/challenge/" + old + "/refresh", "", "application/json");
    const std::string fresh =
        refreshed && refreshed->status == 200 ? json::parse(refreshed->body).value("challenge_id", "") : "";
    const std::string old_after = verify(old);
    const std::string fresh_after = verify(fresh);
    d << ", refresh old " << old_after << " new " << fresh_after;
    ok = ok && old_after == "already_used" && fresh_after == "pass";

    const std::string pending = issue().second;
    clock.advance(config.challenge.ttl + 1s);
    const std::string expired = verify(pending);
    d << ", after ttl " << expired;
    ok = ok && expired == "expired";

    service.stop();
    server.join();
    return verdict(ok, d);
}

bool report(const char* name, const std::function<Verdict()>& criterion) {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
        v = criterion();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s  %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(), secs);
    std::fflush(stdout);
    return v.pass;
}

}  // namespace

int main() {
    const Pipeline p;
    int failed = 0;
    failed += !report("cluster grammar oracle equivalence", grammar_equivalence);
    failed += !report("issue/verify flow for कर्मणि", [&] { return word_flow(p); });
    failed += !report("determinism over 50 seeds", determinism);
    failed += !report("registry bounds and epoch rotation", [&] { return registry_bounds(p); });
    failed += !report("answer preservation", [&] { return answer_preservation(p); });
    failed += !report("segmentation attacker gap", [&] { return segmentation_gap(p); });
    segmentation_frontier(p);
    failed += !report("ink coverage window", [&] { return coverage_window(p); });
    failed += !report("service lifecycle", service_lifecycle);
    std::printf("%d of 8 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
