#include <memory>
#include <optional>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "deva/attack.hpp"
#include "deva/challenge.hpp"
#include "deva/eval.hpp"
#include "deva/image.hpp"
#include "deva/obfuscate.hpp"
#include "deva/render.hpp"
#include "deva/script.hpp"
#include "deva/service.hpp"

namespace py = pybind11;
using namespace deva;

namespace {

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
    const std::string s = b;
    return {s.begin(), s.end()};
}

SampleKind kind_from_string(const std::string& name) {
    if (name == "existing_word") return SampleKind::ExistingWord;
    if (name == "random_string") return SampleKind::RandomString;
    if (name == "phrase") return SampleKind::Phrase;
    throw std::invalid_argument("unknown sample kind: " + name);
}

const Renderer& shared_renderer() {
    static const Renderer r = Renderer::from_files(default_font_paths());
    return r;
}

std::vector<std::string> cluster_strings(const std::vector<Cluster>& clusters) {
    std::vector<std::string> out;
    for (const auto& c : clusters) out.push_back(c.utf8());
    return out;
}

py::dict issued_dict(const IssuedChallenge& c) {
    py::dict d;
    d["challenge_id"] = c.challenge.id;
    d["png"] = to_bytes(c.png);
    d["answer"] = c.answer;
    d["expires_at"] = format_timestamp(c.challenge.expires_at);
    return d;
}

/// Owns the renderer, obfuscator and clock an engine refers to.
class Engine {
public:
    Engine(const Corpus& corpus, std::string secret, double difficulty, int ttl_seconds, std::optional<double> now,
           std::optional<std::string> force_kind, std::uint64_t rotation_seed)
        : obfuscator_(shared_renderer(), difficulty) {
        if (now) manual_ = std::make_unique<ManualClock>(TimePoint(std::chrono::milliseconds(
                       static_cast<std::int64_t>(*now * 1000.0))));
        ChallengePolicy policy;
        policy.ttl = std::chrono::seconds(ttl_seconds);
        if (force_kind) policy.force_kind = kind_from_string(*force_kind);
        EpochPolicy epoch;
        epoch.rotation_seed = rotation_seed;
        engine_ = std::make_unique<ChallengeEngine>(corpus, obfuscator_, build_registry(RegistryConfig::defaults()),
                                                    epoch, policy, std::move(secret), clock());
    }

    py::dict issue(std::uint64_t user_seed) {
        IssuedChallenge c;
        {
            py::gil_scoped_release release;
            c = engine_->issue_for(user_seed);
        }
        return issued_dict(c);
    }
    std::string verify(const std::string& id, const std::string& answer) {
        py::gil_scoped_release release;
        return to_string(engine_->verify(id, answer));
    }
    py::dict refresh(const std::string& id) { return issued_dict(engine_->refresh(id)); }
    std::optional<std::string> state(const std::string& id) const {
        auto c = engine_->store().find(id);
        if (!c) return std::nullopt;
        return std::string(to_string(c->state));
    }
    void advance(double seconds) {
        if (!manual_) throw std::invalid_argument("advance() needs an engine created with now=");
        manual_->advance(std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0)));
    }

private:
    const Clock& clock() const {
        static const SystemClock system;
        return manual_ ? static_cast<const Clock&>(*manual_) : system;
    }

    Obfuscator obfuscator_;
    std::unique_ptr<ManualClock> manual_;
    std::unique_ptr<ChallengeEngine> engine_;
};

}  // namespace

PYBIND11_MODULE(_deva, m) {
    m.doc() = "Devanagari text CAPTCHA core";

    auto base = py::register_exception<std::runtime_error>(m, "DevaError").ptr();
    py::register_exception<MalformedText>(m, "MalformedText", PyExc_ValueError);
    py::register_exception<InvalidLength>(m, "InvalidLength", PyExc_ValueError);
    py::register_exception<EmptyPage>(m, "EmptyPage", base);
    py::register_exception<NoCandidate>(m, "NoCandidate", base);
    py::register_exception<CorpusError>(m, "CorpusError", base);
    py::register_exception<MissingGlyph>(m, "MissingGlyph", base);
    py::register_exception<CanvasOverflow>(m, "CanvasOverflow", base);
    py::register_exception<PngError>(m, "PngError", base);
    py::register_exception<UnknownChallenge>(m, "UnknownChallenge", PyExc_KeyError);

    m.def("normalize", &normalize, py::arg("text"));
    m.def(
        "segment_clusters", [](const std::string& text) { return cluster_strings(segment_clusters(text)); },
        py::arg("normalized_text"));
    m.def(
        "classify", [](std::uint32_t cp) { return std::string(to_string(classify(static_cast<char32_t>(cp)).kind)); },
        py::arg("codepoint"));
    m.def(
        "random_string",
        [](std::uint64_t seed, std::size_t n) {
            Rng rng(seed);
            return random_string(rng, n).normalized;
        },
        py::arg("seed"), py::arg("n_clusters"));

    py::class_<Corpus>(m, "Corpus")
        .def(py::init<>())
        .def(py::init<std::filesystem::path>(), py::arg("directory"))
        .def("ingest", &Corpus::ingest, py::arg("text"), py::arg("source") = "python")
        .def(
            "ingest_file", [](Corpus& c, const std::filesystem::path& p) { return c.ingest_file(p).page_id; },
            py::arg("path"))
        .def("save_index", &Corpus::save_index)
        .def("empty", &Corpus::empty)
        .def("stats",
             [](const Corpus& c) {
                 const CorpusStats s = c.stats();
                 py::dict d;
                 d["pages"] = s.pages;
                 d["words"] = s.words;
                 d["histogram"] = s.histogram;
                 return d;
             })
        .def("words",
             [](const Corpus& c) {
                 std::vector<std::string> out;
                 for (const auto& [w, e] : c.index().entries) out.push_back(w);
                 return out;
             })
        .def(
            "sample",
            [](const Corpus& c, std::uint64_t seed, const std::string& kind, std::size_t min_clusters,
               std::size_t max_clusters) {
                SampleConstraints sc;
                sc.kind = kind_from_string(kind);
                sc.min_clusters = min_clusters;
                sc.max_clusters = max_clusters;
                Rng rng(seed);
                return c.sample_word(sc, rng).normalized;
            },
            py::arg("seed"), py::arg("kind") = "existing_word", py::arg("min_clusters") = 2,
            py::arg("max_clusters") = 6);

    m.def(
        "render",
        [](const std::string& text) { return to_bytes(encode_png(shared_renderer().render(make_challenge_text(text)))); },
        py::arg("text"), "Clean PNG of the text.");
    m.def(
        "obfuscate",
        [](const std::string& text, std::uint64_t seed, double difficulty, std::uint64_t epoch,
           std::uint64_t rotation_seed) {
            const Obfuscator ob(shared_renderer(), difficulty);
            EpochPolicy policy;
            policy.rotation_seed = rotation_seed;
            const auto subset = active_subset(build_registry(RegistryConfig::defaults()), policy, epoch);
            return to_bytes(encode_png(ob.apply(make_challenge_text(text), subset, seed).raster));
        },
        py::arg("text"), py::arg("seed"), py::arg("difficulty") = 0.6, py::arg("epoch") = 0,
        py::arg("rotation_seed") = 0, "Obfuscated PNG of the text under the active subset of an epoch.");
    m.def(
        "ink_coverage", [](const py::bytes& png) { return ink_coverage(decode_png(from_bytes(png))); },
        py::arg("png"));
    m.def(
        "headline_prominence", [](const py::bytes& png) { return headline_prominence(decode_png(from_bytes(png))); },
        py::arg("png"));
    m.def(
        "attack_segments", [](const py::bytes& png) { return attack::segment_png(from_bytes(png)).segments; },
        py::arg("png"), "Segment count found by the baseline segmentation attacker.");
    m.def(
        "evaluate_segmentation",
        [](const Corpus& corpus, std::size_t n, double difficulty, std::uint64_t seed, bool ablations) {
            EvalOptions opts;
            opts.n = n;
            opts.difficulty = difficulty;
            opts.seed = seed;
            opts.ablations = ablations;
            AttackReport r;
            {
                py::gil_scoped_release release;
                r = evaluate_segmentation(corpus, shared_renderer(), opts);
            }
            return py::module_::import("json").attr("loads")(r.to_json());
        },
        py::arg("corpus"), py::arg("n") = 100, py::arg("difficulty") = 0.6, py::arg("seed") = 1,
        py::arg("ablations") = true);

    py::class_<Engine>(m, "Engine")
        .def(py::init<const Corpus&, std::string, double, int, std::optional<double>, std::optional<std::string>,
                      std::uint64_t>(),
             py::arg("corpus"), py::arg("secret"), py::arg("difficulty") = 0.6, py::arg("ttl_seconds") = 90,
             py::arg("now") = py::none(), py::arg("force_kind") = py::none(), py::arg("rotation_seed") = 0,
             py::keep_alive<1, 2>())
        .def("issue", &Engine::issue, py::arg("user_seed") = 0)
        .def("verify", &Engine::verify, py::arg("challenge_id"), py::arg("answer"))
        .def("refresh", &Engine::refresh, py::arg("challenge_id"))
        .def("state", &Engine::state, py::arg("challenge_id"))
        .def("advance", &Engine::advance, py::arg("seconds"));
}
