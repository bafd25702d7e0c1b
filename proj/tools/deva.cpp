#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "deva/challenge.hpp"
#include "deva/config.hpp"
#include "deva/corpus.hpp"
#include "deva/eval.hpp"
#include "deva/image.hpp"
#include "deva/obfuscate.hpp"
#include "deva/render.hpp"
#include "deva/service.hpp"

namespace fs = std::filesystem;
using namespace deva;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::unique_ptr<Corpus> open_corpus(const std::string& dir) {
    if (!dir.empty()) return std::make_unique<Corpus>(fs::path(dir));
    auto corpus = std::make_unique<Corpus>();
    corpus->ingest_file(default_asset_dir() / "corpus" / "sample_hi.txt");
    return corpus;
}

std::vector<fs::path> expand(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".txt") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p)) {
            files.push_back(p);
        } else {
            throw CorpusError("no such file or directory: " + in);
        }
    }
    return files;
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

int cmd_ingest(const std::string& corpus_dir, const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    try {
        files = expand(inputs);
    } catch (const CorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    Corpus corpus{fs::path(corpus_dir)};
    for (const auto& f : files) {
        try {
            const IngestResult r = corpus.ingest_file(f);
            for (const auto& w : r.skipped) std::cerr << "warning: skipped malformed token '" << w << "' in " << f << "\n";
        } catch (const EmptyPage& e) {
            std::cerr << "warning: " << e.what() << "\n";
        }
    }
    corpus.save_index();
    const CorpusStats s = corpus.stats();
    std::cout << "pages: " << s.pages << ", words: " << s.words << "\n";
    return 0;
}

int cmd_stats(const std::string& corpus_dir) {
    Corpus corpus{fs::path(corpus_dir)};
    const CorpusStats s = corpus.stats();
    std::cout << "pages: " << s.pages << ", words: " << s.words << "\n";
    for (const auto& [n, count] : s.histogram) std::cout << "  " << n << " clusters: " << count << "\n";
    return 0;
}

struct GenArgs {
    std::uint64_t seed = 0;
    std::string out;
    std::string answer_out;
    double difficulty = 0.6;
    bool clean = false;
    std::string corpus_dir;
    std::uint64_t epoch = 0;
    std::string secret = "deva offline generation key, not for serving";
};

int cmd_gen(const GenArgs& a) {
    if (a.secret.size() < kMinSecretBytes) {
        std::cerr << "error: --secret must hold at least " << kMinSecretBytes << " bytes\n";
        return kExitUsage;
    }
    auto corpus = open_corpus(a.corpus_dir);
    const Renderer renderer = Renderer::from_files(default_font_paths());
    const Obfuscator obfuscator(renderer, a.difficulty);
    EpochPolicy epoch;
    epoch.rotation_seed = crypto::to_u64(crypto::hmac_sha256(a.secret, "deva-rotation"));
    const ManualClock clock(TimePoint(epoch.epoch_length * static_cast<std::int64_t>(a.epoch)));
    ChallengeEngine engine(*corpus, obfuscator, build_registry(RegistryConfig::defaults()), epoch, ChallengePolicy{},
                           a.secret, clock);

    const ChallengeSpec spec = generate_spec(a.seed, engine.policy(), a.secret, 0);
    auto [text, image] = engine.materialize(spec, clock.now());
    if (a.clean) {
        Rng rng(spec.text_seed);
        text = corpus->sample_word(spec.constraints, rng);
        image = renderer.rasterize(renderer.shape_to_fit(text));
    }
    const auto png = encode_png(image);
    write_file(a.out, png.data(), png.size());
    if (!a.answer_out.empty()) {
        const std::string line = text.normalized + "\n";
        write_file(a.answer_out, line.data(), line.size());
    }
    return 0;
}

int cmd_eval(const std::string& corpus_dir, EvalOptions options, bool as_json) {
    auto corpus = open_corpus(corpus_dir);
    if (corpus->empty()) {
        std::cerr << "error: corpus is empty\n";
        return kExitUsage;
    }
    const Renderer renderer = Renderer::from_files(default_font_paths());
    const AttackReport report = evaluate_segmentation(*corpus, renderer, options);
    std::cout << (as_json ? report.to_json() + "\n" : report.to_table());
    return 0;
}

int cmd_serve(const std::string& config_path) {
    ServiceConfig config;
    try {
        config = load_config(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    Service service(std::move(config));
    const int port = service.bind();
    if (port <= 0) {
        std::cerr << "error: cannot bind " << service.config().host << ":" << service.config().port << "\n";
        return kExitError;
    }
    std::signal(SIGTERM, on_signal);
    std::signal(SIGINT, on_signal);
    std::thread watcher([&] {
        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        while (!service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
        service.stop();
    });
    std::cerr << "listening on " << service.config().host << ":" << port << "\n";
    const bool ok = service.run();
    g_stop.store(true);
    watcher.join();
    return ok ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Devanagari text CAPTCHA tools"};
    app.require_subcommand(1);

    auto* corpus_cmd = app.add_subcommand("corpus", "Corpus maintenance");
    corpus_cmd->require_subcommand(1);
    std::string corpus_dir = "corpus";
    std::vector<std::string> inputs;
    auto* ingest = corpus_cmd->add_subcommand("ingest", "Add UTF-8 text files (or directories of .txt) to a corpus");
    ingest->add_option("paths", inputs, "Files or directories")->required();
    ingest->add_option("--corpus", corpus_dir, "Corpus directory")->capture_default_str();
    auto* stats = corpus_cmd->add_subcommand("stats", "Print corpus statistics");
    stats->add_option("--corpus", corpus_dir, "Corpus directory")->capture_default_str();

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate one challenge image offline");
    gen_cmd->add_option("--seed", gen.seed, "User seed")->required();
    gen_cmd->add_option("--out", gen.out, "PNG output path")->required();
    gen_cmd->add_option("--answer-out", gen.answer_out, "Write the answer text here");
    gen_cmd->add_option("--difficulty", gen.difficulty, "Obfuscation difficulty")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    gen_cmd->add_flag("--clean", gen.clean, "Render without obfuscation");
    gen_cmd->add_option("--corpus", gen.corpus_dir, "Corpus directory (default: bundled sample)");
    gen_cmd->add_option("--epoch", gen.epoch, "Epoch index selecting the active subset")->capture_default_str();
    gen_cmd->add_option("--secret", gen.secret, "Key for seed derivation");

    auto* eval_cmd = app.add_subcommand("eval", "Robustness evaluation");
    eval_cmd->require_subcommand(1);
    EvalOptions eval;
    bool as_json = false;
    bool no_ablations = false;
    std::string eval_corpus;
    auto* seg = eval_cmd->add_subcommand("segmentation", "Run the segmentation attacker on clean and obfuscated images");
    seg->add_option("--n", eval.n, "Samples")->check(CLI::PositiveNumber)->capture_default_str();
    seg->add_option("--difficulty", eval.difficulty, "Obfuscation difficulty")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    seg->add_option("--seed", eval.seed, "Sampling seed")->capture_default_str();
    seg->add_option("--corpus", eval_corpus, "Corpus directory (default: bundled sample)");
    seg->add_flag("--json", as_json, "Emit JSON");
    seg->add_flag("--no-ablations", no_ablations, "Skip per-family runs");

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config_path, "TOML config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(corpus_dir, inputs);
        if (stats->parsed()) return cmd_stats(corpus_dir);
        if (gen_cmd->parsed()) return cmd_gen(gen);
        if (seg->parsed()) {
            eval.ablations = !no_ablations;
            return cmd_eval(eval_corpus, eval, as_json);
        }
        if (serve->parsed()) return cmd_serve(config_path);
    } catch (const NoCandidate& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}
