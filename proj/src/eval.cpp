#include "deva/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include <json.hpp>

#include "deva/attack.hpp"

namespace deva {

namespace {

bool exact(const Raster& image, std::size_t clusters) {
    const auto png = encode_png(image);
    return attack::segment_png(png).segments == static_cast<int>(clusters);
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

AttackReport evaluate_segmentation(const Corpus& corpus, const Renderer& renderer, const EvalOptions& options) {
    if (options.n == 0) throw std::invalid_argument("evaluation needs at least one sample");
    const TransformRegistry registry = build_registry(options.registry);
    const Obfuscator obfuscator(renderer, options.difficulty);

    Rng rng(options.seed);
    std::vector<ChallengeText> texts;
    texts.reserve(options.n);
    for (std::size_t i = 0; i < options.n; ++i) texts.push_back(corpus.sample_word(options.constraints, rng));

    std::vector<std::vector<TransformInstance>> by_family(kAllFamilies.size());
    for (const auto& inst : registry.instances) by_family[static_cast<std::size_t>(inst.family)].push_back(inst);

    const std::size_t columns = 2 + (options.ablations ? kAllFamilies.size() : 0);
    std::vector<std::vector<char>> hits(options.n, std::vector<char>(columns, 0));

    parallel_for(options.n, options.threads, [&](std::size_t i) {
        const ChallengeText& text = texts[i];
        const std::size_t truth = text.size();
        const std::uint64_t sample_seed = mix64(options.seed, i);
        hits[i][0] = exact(renderer.render(text), truth);
        const auto subset = active_subset(registry, options.epoch, i);
        hits[i][1] = exact(obfuscator.apply(text, subset, sample_seed).raster, truth);
        if (!options.ablations) return;
        for (std::size_t f = 0; f < kAllFamilies.size(); ++f) {
            const auto& pool = by_family[f];
            const std::vector<TransformInstance> alone{pool[i % pool.size()]};
            hits[i][2 + f] = exact(obfuscator.apply(text, alone, sample_seed).raster, truth);
        }
    });

    AttackReport report;
    report.n_samples = options.n;
    report.difficulty = options.difficulty;
    report.seed = options.seed;
    const auto rate = [&](std::size_t col) {
        std::size_t k = 0;
        for (const auto& row : hits) k += row[col] ? 1 : 0;
        return static_cast<double>(k) / static_cast<double>(options.n);
    };
    report.clean_exact_rate = rate(0);
    report.obfuscated_exact_rate = rate(1);
    if (options.ablations)
        for (std::size_t f = 0; f < kAllFamilies.size(); ++f) report.family_exact_rate[to_string(kAllFamilies[f])] = rate(2 + f);
    return report;
}

std::string AttackReport::to_json() const {
    nlohmann::json j{{"n_samples", n_samples},
                     {"difficulty", difficulty},
                     {"seed", seed},
                     {"clean_exact_rate", clean_exact_rate},
                     {"obfuscated_exact_rate", obfuscated_exact_rate},
                     {"family_exact_rate", family_exact_rate}};
    return j.dump(2);
}

std::string AttackReport::to_table() const {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "samples      %zu\ndifficulty   %.2f\nseed         %llu\n\n", n_samples,
                  difficulty, static_cast<unsigned long long>(seed));
    out += line;
    std::snprintf(line, sizeof line, "%-24s %s\n", "condition", "exact-count rate");
    out += line;
    std::snprintf(line, sizeof line, "%-24s %.3f\n", "clean", clean_exact_rate);
    out += line;
    std::snprintf(line, sizeof line, "%-24s %.3f\n", "obfuscated", obfuscated_exact_rate);
    out += line;
    for (const auto& [family, r] : family_exact_rate) {
        std::snprintf(line, sizeof line, "  %-22s %.3f\n", family.c_str(), r);
        out += line;
    }
    return out;
}

}  // namespace deva
