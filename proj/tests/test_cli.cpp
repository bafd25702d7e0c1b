#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "deva/image.hpp"
#include "support.hpp"

using namespace std::chrono_literals;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

// Runs the CLI through the shell; stdout only, stderr discarded.
Outcome run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " '" DEVA_CLI_PATH "' " + args + " 2>/dev/null";
    Outcome o;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
    const int status = ::pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

deva::Raster load_png(const std::filesystem::path& p) {
    const std::string bytes = testing::read_text(p);
    return deva::decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

}  // namespace

TEST_CASE("corpus ingest prints page and word counts and is idempotent") {
    testing::TempDir dir;
    testing::write_text(dir / "a.txt", "कर्मणि योग\n");
    const std::string args = "corpus ingest " + quote(dir / "a.txt") + " --corpus " + quote(dir / "corpus");
    const Outcome first = run(args);
    CHECK(first.code == 0);
    CHECK(first.out == "pages: 1, words: 2\n");
    const Outcome again = run(args);
    CHECK(again.code == 0);
    CHECK(again.out == first.out);
    const Outcome stats = run("corpus stats --corpus " + quote(dir / "corpus"));
    CHECK(stats.code == 0);
    CHECK(stats.out.rfind("pages: 1, words: 2\n", 0) == 0);
}

TEST_CASE("corpus ingest of a missing path exits 2") {
    testing::TempDir dir;
    CHECK(run("corpus ingest " + quote(dir / "missing.txt") + " --corpus " + quote(dir / "corpus")).code == 2);
}

TEST_CASE("corpus ingest walks directories") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "in" / "sub");
    testing::write_text(dir / "in" / "one.txt", "कर्मणि");
    testing::write_text(dir / "in" / "sub" / "two.txt", "योग धर्म");
    testing::write_text(dir / "in" / "skip.md", "क्षेत्र");
    CHECK(run("corpus ingest " + quote(dir / "in") + " --corpus " + quote(dir / "corpus")).out ==
          "pages: 2, words: 3\n");
}

TEST_CASE("gen is deterministic and writes the answer") {
    testing::TempDir dir;
    for (int seed : {1, 2, 3}) {
        const std::string s = std::to_string(seed);
        REQUIRE(run("gen --seed " + s + " --out " + quote(dir / "a.png") + " --answer-out " + quote(dir / "a.txt")).code == 0);
        REQUIRE(run("gen --seed " + s + " --out " + quote(dir / "b.png")).code == 0);
        CHECK(testing::read_text(dir / "a.png") == testing::read_text(dir / "b.png"));
        const std::string answer = testing::read_text(dir / "a.txt");
        CHECK(!answer.empty());
        CHECK(answer.back() == '\n');
        CHECK_NOTHROW(deva::make_challenge_text(answer));
        const deva::Raster img = load_png(dir / "a.png");
        CHECK(img.width > 0);
    }
}

TEST_CASE("gen --clean headline prominence is at least 3x") {
    testing::TempDir dir;
    for (int seed = 0; seed < 10; ++seed) {
        REQUIRE(run("gen --clean --seed " + std::to_string(seed) + " --out " + quote(dir / "c.png") + " --answer-out " +
                    quote(dir / "c.txt"))
                    .code == 0);
        const double p = deva::headline_prominence(load_png(dir / "c.png"));
        CHECK_MESSAGE(p >= 3.0, testing::read_text(dir / "c.txt") << " prominence " << p);
    }
}

TEST_CASE("gen difficulty 0 vs 1 changes ink coverage by at least 0.02 on average") {
    testing::TempDir dir;
    double delta = 0.0;
    const int n = 50;
    for (int seed = 0; seed < n; ++seed) {
        const std::string s = std::to_string(seed);
        REQUIRE(run("gen --difficulty 0 --seed " + s + " --out " + quote(dir / "lo.png")).code == 0);
        REQUIRE(run("gen --difficulty 1 --seed " + s + " --out " + quote(dir / "hi.png")).code == 0);
        delta += deva::ink_coverage(load_png(dir / "hi.png")) - deva::ink_coverage(load_png(dir / "lo.png"));
    }
    MESSAGE("mean coverage delta " << delta / n);
    CHECK(delta / n >= 0.02);
}

TEST_CASE("gen rejects a short secret and an empty corpus") {
    testing::TempDir dir;
    CHECK(run("gen --seed 1 --secret short --out " + quote(dir / "x.png")).code == 2);
    std::filesystem::create_directories(dir / "empty");
    CHECK(run("gen --seed 1 --corpus " + quote(dir / "empty") + " --out " + quote(dir / "x.png")).code == 2);
}

TEST_CASE("eval segmentation emits a bounded report") {
    const Outcome o = run("eval segmentation --n 5 --json");
    REQUIRE(o.code == 0);
    const auto j = nlohmann::json::parse(o.out);
    CHECK(j.at("n_samples") == 5);
    for (const char* k : {"clean_exact_rate", "obfuscated_exact_rate"}) {
        const double r = j.at(k);
        CHECK((r >= 0.0 && r <= 1.0));
    }
    CHECK(j.at("family_exact_rate").size() == 11);
    const Outcome table = run("eval segmentation --n 3 --no-ablations");
    CHECK(table.code == 0);
    CHECK(table.out.find("obfuscated") != std::string::npos);
}

TEST_CASE("eval on an empty corpus exits 2") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "empty");
    CHECK(run("eval segmentation --n 3 --corpus " + quote(dir / "empty")).code == 2);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("gen --out x.png").code == 2);
}

TEST_CASE("serve without a secret exits 2") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "corpus");
    testing::write_text(dir / "deva.toml", "[corpus]\ndir = \"corpus\"\n");
    CHECK(run("serve --config " + quote(dir / "deva.toml"), "env -u DEVA_SECRET").code == 2);
}

TEST_CASE("serve answers healthz and exits 0 on SIGTERM") {
    testing::TempDir dir;
    run("corpus ingest " + quote(testing::sample_corpus_file()) + " --corpus " + quote(dir / "corpus"));
    testing::write_text(dir / "deva.toml", "[server]\nport = 0\n[corpus]\ndir = \"corpus\"\n");

    int err[2];
    REQUIRE(::pipe(err) == 0);
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        ::dup2(err[1], 2);
        ::close(err[0]);
        ::setenv("DEVA_SECRET", "a serving secret of at least thirty-two bytes", 1);
        const std::string cfg = (dir / "deva.toml").string();
        ::execl(DEVA_CLI_PATH, DEVA_CLI_PATH, "serve", "--config", cfg.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(err[1]);

    std::string banner;
    char ch;
    while (banner.find('\n') == std::string::npos && ::read(err[0], &ch, 1) == 1) banner.push_back(ch);
    const auto colon = banner.rfind(':');
    REQUIRE(colon != std::string::npos);
    const int port = std::stoi(banner.substr(colon + 1));

    httplib::Client client("127.0.0.1", port);
    httplib::Result r;
    for (int i = 0; i < 100 && !(r = client.Get("/healthz")); ++i) std::this_thread::sleep_for(20ms);
    REQUIRE(r);
    CHECK(r->status == 200);

    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(err[0]);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
}
