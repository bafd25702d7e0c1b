#include "deva/corpus.hpp"

#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>

#include "deva/crypto.hpp"

namespace deva {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPagesMagic = "DEVAPAGES1\n";
constexpr std::string_view kIndexHeader = "# deva word index v1 ";

bool is_word_codepoint(char32_t cp) {
    return in_devanagari_block(cp) && classify(cp).kind != ClassKind::Other;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
    return v;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

const char* to_string(SampleKind kind) noexcept {
    switch (kind) {
        case SampleKind::ExistingWord: return "existing_word";
        case SampleKind::RandomString: return "random_string";
        case SampleKind::Phrase: return "phrase";
    }
    return "existing_word";
}

void SampleConstraints::validate() const {
    if (min_clusters < 1 || min_clusters > max_clusters)
        throw std::invalid_argument("sample constraints need 1 <= min_clusters <= max_clusters");
    if (kind == SampleKind::Phrase && phrase_words < 1) throw std::invalid_argument("phrase needs at least one word");
    if (!(conjunct_weight > 0.0)) throw std::invalid_argument("conjunct_weight must be positive");
    weights.validate();
}

Corpus::Corpus(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(*dir_, ec);
    if (ec) throw CorpusError("cannot create corpus directory " + dir_->string() + ": " + ec.message());
    load();
}

std::string Corpus::page_id(std::string_view text, std::string_view source) {
    std::string msg(source);
    msg.push_back('\0');
    msg.append(text);
    const auto d = crypto::sha256(msg);
    return crypto::to_hex(std::span(d).first(8));
}

std::vector<std::string> Corpus::tokenize(std::string_view normalized_text) {
    std::vector<std::string> out;
    std::u32string run;
    for (char32_t cp : utf8_to_u32(normalized_text)) {
        if (is_word_codepoint(cp)) {
            run.push_back(cp);
        } else if (!run.empty()) {
            out.push_back(u32_to_utf8(run));
            run.clear();
        }
    }
    if (!run.empty()) out.push_back(u32_to_utf8(run));
    return out;
}

void Corpus::index_page(WordIndex& index, const Page& page, std::vector<std::string>* skipped) {
    for (auto& word : tokenize(page.text)) {
        auto it = index.entries.find(word);
        if (it == index.entries.end()) {
            std::vector<Cluster> clusters;
            try {
                clusters = segment_clusters(word);
            } catch (const MalformedText&) {
                if (skipped) skipped->push_back(word);
                continue;
            }
            WordEntry entry;
            entry.clusters = clusters.size();
            for (const auto& c : clusters) entry.conjunct_depth = std::max(entry.conjunct_depth, c.conjunct_depth);
            index.buckets[entry.clusters].insert(word);
            it = index.entries.emplace(word, std::move(entry)).first;
        }
        it->second.pages.insert(page.id);
        ++it->second.count;
    }
}

WordIndex Corpus::build_index(const std::vector<Page>& pages) {
    WordIndex index;
    for (const auto& p : pages) index_page(index, p, nullptr);
    return index;
}

std::string Corpus::fingerprint(const std::map<std::string, Page>& pages) {
    std::string ids;
    for (const auto& [id, _] : pages) ids += id;
    const auto d = crypto::sha256(ids);
    return crypto::to_hex(std::span(d).first(8));
}

IngestResult Corpus::ingest_detailed(std::string_view text, std::string_view source) {
    Page page;
    page.text = normalize(text);
    page.source = std::string(source);
    page.id = page_id(page.text, page.source);

    IngestResult result;
    result.page_id = page.id;
    WordIndex own;
    index_page(own, page, &result.skipped);
    if (own.entries.empty()) throw EmptyPage("no indexable Devanagari word in page from '" + page.source + "'");

    std::unique_lock lock(mu_);
    if (pages_.contains(page.id)) {
        result.skipped.clear();
        return result;
    }
    if (dir_) append_record(page);
    index_page(index_, page, nullptr);
    pages_.emplace(page.id, std::move(page));
    result.created = true;
    return result;
}

std::string Corpus::ingest(std::string_view text, std::string_view source) {
    return ingest_detailed(text, source).page_id;
}

IngestResult Corpus::ingest_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw CorpusError("no such file: " + path.string());
    return ingest_detailed(read_file(path), path.string());
}

void Corpus::append_record(const Page& page) const {
    const fs::path file = *dir_ / "pages.dat";
    const bool fresh = !fs::exists(file) || fs::file_size(file) == 0;
    std::string payload;
    put_u32(payload, static_cast<std::uint32_t>(page.id.size()));
    payload += page.id;
    put_u32(payload, static_cast<std::uint32_t>(page.source.size()));
    payload += page.source;
    payload += page.text;
    std::string record;
    put_u32(record, static_cast<std::uint32_t>(payload.size()));
    record += payload;

    std::ofstream out(file, std::ios::binary | std::ios::app);
    if (!out) throw CorpusError("cannot append to " + file.string());
    if (fresh) out << kPagesMagic;
    out << record;
    out.flush();
    if (!out) throw CorpusError("write failed on " + file.string());
}

void Corpus::load() {
    const fs::path file = *dir_ / "pages.dat";
    if (fs::exists(file)) {
        const std::string data = read_file(file);
        if (!data.empty()) {
            if (data.compare(0, kPagesMagic.size(), kPagesMagic) != 0) throw CorpusError("bad pages.dat header");
            std::size_t pos = kPagesMagic.size();
            const auto need = [&](std::size_t n) {
                if (pos + n > data.size()) throw CorpusError("truncated pages.dat record");
            };
            while (pos < data.size()) {
                need(4);
                const std::uint32_t len = get_u32(data, pos);
                pos += 4;
                need(len);
                const std::string_view rec(data.data() + pos, len);
                pos += len;
                std::size_t p = 0;
                const auto field = [&]() {
                    if (p + 4 > rec.size()) throw CorpusError("corrupt pages.dat record");
                    const std::uint32_t n = get_u32(rec, p);
                    p += 4;
                    if (p + n > rec.size()) throw CorpusError("corrupt pages.dat record");
                    std::string s(rec.substr(p, n));
                    p += n;
                    return s;
                };
                Page page;
                page.id = field();
                page.source = field();
                page.text = std::string(rec.substr(p));
                pages_.emplace(page.id, std::move(page));
            }
        }
    }

    const fs::path index_file = *dir_ / "index.dat";
    const std::string fp = fingerprint(pages_);
    if (fs::exists(index_file)) {
        std::istringstream in(read_file(index_file));
        std::string line;
        if (std::getline(in, line) && line == std::string(kIndexHeader) + fp) {
            WordIndex idx;
            bool ok = true;
            while (ok && std::getline(in, line)) {
                std::istringstream fields(line);
                std::string word, count, clusters, depth, ids;
                if (!std::getline(fields, word, '\t') || !std::getline(fields, count, '\t') ||
                    !std::getline(fields, clusters, '\t') || !std::getline(fields, depth, '\t') ||
                    !std::getline(fields, ids)) {
                    ok = false;
                    break;
                }
                WordEntry e;
                e.count = std::stoull(count);
                e.clusters = std::stoull(clusters);
                e.conjunct_depth = std::stoi(depth);
                std::istringstream id_stream(ids);
                std::string id;
                while (std::getline(id_stream, id, ','))
                    if (!id.empty()) e.pages.insert(id);
                idx.buckets[e.clusters].insert(word);
                idx.entries.emplace(word, std::move(e));
            }
            if (ok) {
                index_ = std::move(idx);
                return;
            }
        }
    }
    std::vector<Page> all;
    for (const auto& [_, p] : pages_) all.push_back(p);
    index_ = build_index(all);
    save_index();
}

void Corpus::save_index() const {
    if (!dir_) return;
    std::shared_lock lock(mu_);
    std::string out = std::string(kIndexHeader) + fingerprint(pages_) + "\n";
    for (const auto& [word, e] : index_.entries) {
        out += word + "\t" + std::to_string(e.count) + "\t" + std::to_string(e.clusters) + "\t" +
               std::to_string(e.conjunct_depth) + "\t";
        bool first = true;
        for (const auto& id : e.pages) {
            if (!first) out += ",";
            out += id;
            first = false;
        }
        out += "\n";
    }
    const fs::path tmp = *dir_ / "index.dat.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CorpusError("cannot write " + tmp.string());
        f << out;
    }
    fs::rename(tmp, *dir_ / "index.dat");
}

void Corpus::reindex() {
    {
        std::unique_lock lock(mu_);
        std::vector<Page> all;
        for (const auto& [_, p] : pages_) all.push_back(p);
        index_ = build_index(all);
    }
    save_index();
}

ChallengeText Corpus::sample_word(const SampleConstraints& constraints, Rng& rng) const {
    constraints.validate();
    if (constraints.kind == SampleKind::RandomString) {
        const auto n = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(constraints.min_clusters),
                                                            static_cast<std::int64_t>(constraints.max_clusters)));
        return random_string(rng, n, constraints.weights);
    }

    std::shared_lock lock(mu_);
    std::vector<const std::string*> candidates;
    std::vector<double> weights;
    for (auto it = index_.buckets.lower_bound(constraints.min_clusters);
         it != index_.buckets.end() && it->first <= constraints.max_clusters; ++it) {
        for (const auto& word : it->second) {
            candidates.push_back(&word);
            const bool conjunct = index_.entries.at(word).conjunct_depth >= 2;
            weights.push_back(constraints.prefer_conjuncts && conjunct ? constraints.conjunct_weight : 1.0);
        }
    }
    if (candidates.empty())
        throw NoCandidate("no indexed word has " + std::to_string(constraints.min_clusters) + ".." +
                          std::to_string(constraints.max_clusters) + " clusters");

    const auto draw = [&]() -> const std::string& {
        const std::size_t i =
            constraints.prefer_conjuncts ? rng.weighted(weights) : static_cast<std::size_t>(rng.below(candidates.size()));
        return *candidates[i];
    };
    if (constraints.kind == SampleKind::ExistingWord) return make_challenge_text(draw());

    std::string phrase;
    for (std::size_t k = 0; k < constraints.phrase_words; ++k) {
        if (k > 0) phrase.push_back(' ');
        phrase += draw();
    }
    return make_challenge_text(phrase);
}

CorpusStats Corpus::stats() const {
    std::shared_lock lock(mu_);
    CorpusStats s;
    s.pages = pages_.size();
    s.words = index_.entries.size();
    for (const auto& [n, words] : index_.buckets) s.histogram[n] = words.size();
    return s;
}

WordIndex Corpus::index() const {
    std::shared_lock lock(mu_);
    return index_;
}

std::vector<Page> Corpus::pages() const {
    std::shared_lock lock(mu_);
    std::vector<Page> out;
    for (const auto& [_, p] : pages_) out.push_back(p);
    return out;
}

bool Corpus::empty() const {
    std::shared_lock lock(mu_);
    return index_.entries.empty();
}

}  // namespace deva
