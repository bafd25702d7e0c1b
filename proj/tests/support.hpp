#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "deva/corpus.hpp"
#include "deva/render.hpp"

namespace testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("deva-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path sample_corpus_file() { return deva::default_asset_dir() / "corpus" / "sample_hi.txt"; }

inline const deva::Renderer& renderer() {
    static const deva::Renderer r = deva::Renderer::from_files(deva::default_font_paths());
    return r;
}

inline const deva::Corpus& sample_corpus() {
    static const deva::Corpus* c = [] {
        auto* corpus = new deva::Corpus();
        corpus->ingest_file(sample_corpus_file());
        return corpus;
    }();
    return *c;
}

/// Every distinct word in the bundled sample corpus.
inline std::vector<std::string> sample_words() {
    std::vector<std::string> out;
    for (const auto& [w, e] : sample_corpus().index().entries) out.push_back(w);
    return out;
}

inline std::vector<std::string> multi_cluster_words() {
    std::vector<std::string> out;
    for (const auto& [w, e] : sample_corpus().index().entries)
        if (e.clusters >= 2) out.push_back(w);
    return out;
}

}  // namespace testing
