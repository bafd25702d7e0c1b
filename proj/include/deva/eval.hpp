#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "deva/corpus.hpp"
#include "deva/obfuscate.hpp"
#include "deva/render.hpp"

namespace deva {

struct AttackReport {
    std::size_t n_samples = 0;
    double difficulty = 0.0;
    std::uint64_t seed = 0;
    double clean_exact_rate = 0.0;
    double obfuscated_exact_rate = 0.0;
    std::map<std::string, double> family_exact_rate;  // each family applied alone

    std::string to_json() const;
    std::string to_table() const;
};

struct EvalOptions {
    std::size_t n = 100;
    double difficulty = 0.6;
    std::uint64_t seed = 1;
    SampleConstraints constraints{};
    RegistryConfig registry = RegistryConfig::defaults();
    EpochPolicy epoch{};
    bool ablations = true;
    unsigned threads = 0;  // 0 = hardware concurrency
};

/// Samples n words, renders each clean and obfuscated, and runs the segmentation attacker on the PNG bytes.
/// Obfuscated sample i uses the active subset of epoch i. Throws NoCandidate on an empty corpus.
AttackReport evaluate_segmentation(const Corpus& corpus, const Renderer& renderer, const EvalOptions& options);

}  // namespace deva
