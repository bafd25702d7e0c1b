#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "deva/image.hpp"
#include "deva/service.hpp"
#include "support.hpp"

using namespace deva;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

const std::string kSecret(40, 'k');

ServiceConfig base_config(const std::filesystem::path& corpus_dir) {
    ServiceConfig c;
    c.port = 0;
    c.corpus_dir = corpus_dir;
    c.font_paths = default_font_paths();
    c.secret = kSecret;
    c.challenge.force_kind = SampleKind::ExistingWord;
    c.cors_origins = {"https://allowed.example"};
    c.api_keys = {"partner-key"};
    return c;
}

void seed_corpus(const std::filesystem::path& dir, const std::string& text) {
    Corpus c(dir);
    if (!text.empty()) c.ingest(text, "seed");
    c.save_index();
}

class Running {
public:
    Running(ServiceConfig config, const Clock& clock) : service_(std::move(config), clock) {
        port_ = service_.bind();
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { service_.run(); });
        for (int i = 0; i < 500 && !service_.running(); ++i) std::this_thread::sleep_for(2ms);
        REQUIRE(service_.running());
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_connection_timeout(5);
        c.set_read_timeout(30);
        return c;
    }
    Service& service() { return service_; }

private:
    Service service_;
    int port_ = 0;
    std::thread thread_;
};

struct Fixture {
    testing::TempDir dir;
    ManualClock clock{TimePoint(1700000000s)};
    std::unique_ptr<Running> server;

    explicit Fixture(const std::string& corpus = "कर्मणि") { seed_corpus(dir / "corpus", corpus); }

    ServiceConfig config() const { return base_config(dir / "corpus"); }
    void start(ServiceConfig c) { server = std::make_unique<Running>(std::move(c), clock); }
    void start() { start(config()); }
    void stop() { server.reset(); }

    httplib::Result post(const std::string& path, const std::string& body = "", httplib::Headers headers = {}) const {
        return server->client().Post(path, headers, body, "application/json");
    }
    json issue() const {
        auto r = post("/api/v1/challenge");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body);
    }
    std::string verify(const std::string& id, const std::string& answer) const {
        auto r = post("/api/v1/verify", json{{"challenge_id", id}, {"answer", answer}}.dump());
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body).at("result").get<std::string>();
    }
    json metrics() const {
        auto r = server->client().Get("/metrics");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body);
    }
};

}  // namespace

TEST_CASE("healthz and fresh metrics") {
    Fixture f("कर्मणि योग");
    f.start();
    auto r = f.server->client().Get("/healthz");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(json::parse(r->body).at("corpus_words") == 2);
    for (const char* k : {"issued", "passed", "failed", "expired", "refreshed", "rate_limited"})
        CHECK(f.metrics().at(k) == 0);
}

TEST_CASE("issue returns a decodable PNG within bounds and never the answer") {
    Fixture f;
    f.start();
    auto r = f.post("/api/v1/challenge");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    CHECK(r->body.find("कर्मणि") == std::string::npos);
    CHECK(r->body.find("\\u0915") == std::string::npos);
    const json body = json::parse(r->body);
    CHECK(body.at("media_type") == "image/png");
    CHECK(body.at("challenge_id").get<std::string>().size() == 32);
    const Raster img = decode_png(crypto::base64_decode(body.at("image").get<std::string>()));
    const CanvasConfig cc;
    CHECK((img.width >= cc.min_width && img.width <= cc.max_width));
    CHECK((img.height >= cc.min_height && img.height <= cc.max_height));
    // 1700000000 s after the Unix epoch is 2023-11-14T22:13:20Z; the default ttl is 90 s.
    CHECK(body.at("expires_at") == "2023-11-14T22:14:50.000Z");
}

TEST_CASE("timestamps are RFC 3339 UTC with milliseconds") {
    CHECK(format_timestamp(TimePoint{}) == "1970-01-01T00:00:00.000Z");
    CHECK(format_timestamp(TimePoint(951782400s + 1234ms)) == "2000-02-29T00:00:01.234Z");
}

TEST_CASE("user seed in the body is accepted and validated") {
    Fixture f;
    f.start();
    CHECK(f.post("/api/v1/challenge", R"({"user_seed": 12345})")->status == 200);
    CHECK(f.post("/api/v1/challenge", R"({"user_seed": -1})")->status == 400);
    CHECK(f.post("/api/v1/challenge", R"({"user_seed": "x"})")->status == 400);
    CHECK(f.post("/api/v1/challenge", "[1, 2")->status == 400);
}

TEST_CASE("the eleventh request in a minute is rate limited") {
    Fixture f;
    f.start();
    for (int i = 0; i < 10; ++i) CHECK(f.post("/api/v1/challenge")->status == 200);
    CHECK(f.post("/api/v1/challenge")->status == 429);
    CHECK(f.metrics().at("rate_limited") == 1);
    CHECK(f.metrics().at("issued") == 10);
    f.clock.advance(6s);
    CHECK(f.post("/api/v1/challenge")->status == 200);
    CHECK(f.post("/api/v1/challenge")->status == 429);
}

TEST_CASE("api keys get their own bucket and unknown keys are refused") {
    Fixture f;
    f.start();
    for (int i = 0; i < 10; ++i) REQUIRE(f.post("/api/v1/challenge")->status == 200);
    CHECK(f.post("/api/v1/challenge")->status == 429);
    CHECK(f.post("/api/v1/challenge", "", {{"X-API-Key", "partner-key"}})->status == 200);
    CHECK(f.post("/api/v1/challenge", "", {{"X-API-Key", "stolen"}})->status == 401);
}

TEST_CASE("verify outcomes") {
    Fixture f;
    f.start();
    const std::string id = f.issue().at("challenge_id");
    CHECK(f.verify(id, "कर्मणि") == "pass");
    CHECK(f.verify(id, "कर्मणि") == "already_used");
    CHECK(f.verify("0123456789abcdef0123456789abcdef", "कर्मणि") == "unknown");
    const std::string other = f.issue().at("challenge_id");
    CHECK(f.verify(other, "abc") == "fail");
    const json m = f.metrics();
    CHECK(m.at("issued") == 2);
    CHECK(m.at("passed") == 1);
    CHECK(m.at("failed") == 1);
}

TEST_CASE("after one pass the counters read issued 1, passed 1") {
    Fixture f;
    f.start();
    CHECK(f.verify(f.issue().at("challenge_id"), "कर्मणि") == "pass");
    CHECK(f.metrics().at("issued") == 1);
    CHECK(f.metrics().at("passed") == 1);
}

TEST_CASE("verify after the ttl is expired") {
    Fixture f;
    f.start();
    const std::string id = f.issue().at("challenge_id");
    f.clock.advance(91s);
    CHECK(f.verify(id, "कर्मणि") == "expired");
    CHECK(f.metrics().at("expired") == 1);
}

TEST_CASE("malformed verify bodies are 400") {
    Fixture f;
    f.start();
    for (const char* body : {"", "nope", "{}", R"({"challenge_id": 1, "answer": "x"})", R"({"challenge_id": "a"})",
                             R"(["challenge_id", "answer"])"})
        CHECK_MESSAGE(f.post("/api/v1/verify", body)->status == 400, body);
}

TEST_CASE("refresh") {
    Fixture f;
    f.start();
    CHECK(f.post("/api/v1/challenge/0123456789abcdef0123456789abcdef/refresh")->status == 404);
    const std::string old = f.issue().at("challenge_id");
    auto r = f.post("/api/v1/challenge/" + old + "/refresh");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const json fresh = json::parse(r->body);
    CHECK(fresh.at("challenge_id") != old);
    CHECK(fresh.contains("image"));
    CHECK(f.verify(old, "कर्मणि") == "already_used");
    CHECK(f.verify(fresh.at("challenge_id"), "कर्मणि") == "pass");
    CHECK(f.metrics().at("refreshed") == 1);
    CHECK(f.metrics().at("issued") == 2);
}

TEST_CASE("empty corpus is 503") {
    Fixture f("");
    f.start();
    CHECK(f.post("/api/v1/challenge")->status == 503);
}

TEST_CASE("cors allowlist") {
    Fixture f;
    f.start();
    auto ok = f.post("/api/v1/challenge", "", {{"Origin", "https://allowed.example"}});
    REQUIRE(ok);
    CHECK(ok->status == 200);
    CHECK(ok->get_header_value("Access-Control-Allow-Origin") == "https://allowed.example");
    CHECK(f.post("/api/v1/challenge", "", {{"Origin", "https://evil.example"}})->status == 403);
    auto pre = f.server->client().Options("/api/v1/verify", {{"Origin", "https://allowed.example"}});
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("challenge state survives a restart only with persistence") {
    SUBCASE("with persistence") {
        Fixture f;
        ServiceConfig c = f.config();
        c.store.persistence_path = f.dir / "state.jsonl";
        f.start(c);
        const std::string pending = f.issue().at("challenge_id");
        const std::string used = f.issue().at("challenge_id");
        REQUIRE(f.verify(used, "कर्मणि") == "pass");
        f.stop();
        f.start(c);
        CHECK(f.verify(used, "कर्मणि") == "already_used");
        CHECK(f.verify(pending, "कर्मणि") == "pass");
    }
    SUBCASE("without persistence") {
        Fixture f;
        f.start();
        const std::string pending = f.issue().at("challenge_id");
        f.stop();
        f.start();
        CHECK(f.verify(pending, "कर्मणि") == "unknown");
    }
}

TEST_CASE("32 concurrent verifiers over HTTP yield exactly one pass") {
    Fixture f;
    ServiceConfig c = f.config();
    f.start(c);
    for (int round = 0; round < 3; ++round) {
        const std::string id = f.issue().at("challenge_id");
        std::atomic<int> pass{0}, used{0}, other{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 32; ++t)
            threads.emplace_back([&] {
                auto r = f.post("/api/v1/verify", json{{"challenge_id", id}, {"answer", "कर्मणि"}}.dump());
                const std::string result = r && r->status == 200 ? json::parse(r->body).value("result", "") : "";
                if (!r) std::fprintf(stderr, "error %d\n", static_cast<int>(r.error()));
                if (result == "pass") ++pass;
                else if (result == "already_used") ++used;
                else ++other;
            });
        for (auto& t : threads) t.join();
        CHECK(pass == 1);
        CHECK(used == 31);
        CHECK(other == 0);
    }
}

TEST_CASE("rate limiter refills continuously") {
    ManualClock clock;
    RateLimiter rl(10, clock);
    for (int i = 0; i < 10; ++i) CHECK(rl.allow("a"));
    CHECK(!rl.allow("a"));
    CHECK(rl.allow("b"));
    clock.advance(6s);
    CHECK(rl.allow("a"));
    CHECK(!rl.allow("a"));
    clock.advance(10min);
    for (int i = 0; i < 10; ++i) CHECK(rl.allow("a"));
    CHECK(!rl.allow("a"));
}
