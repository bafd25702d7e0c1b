#include "deva/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "deva/render.hpp"
#include "toml.hpp"

namespace deva {

namespace fs = std::filesystem;

namespace {

void check_keys(const toml::table& t, std::string_view where, std::initializer_list<std::string_view> allowed) {
    const std::set<std::string_view> ok(allowed);
    for (const auto& [k, _] : t)
        if (!ok.contains(k.str())) throw ConfigError("unknown key '" + std::string(k.str()) + "' in " + std::string(where));
}

template <class T>
std::optional<T> get(const toml::table& t, std::string_view key, std::string_view where) {
    const toml::node* n = t.get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value<T>()) return *v;
    throw ConfigError("wrong type for '" + std::string(key) + "' in " + std::string(where));
}

const toml::table* section(const toml::table& root, std::string_view name) {
    const toml::node* n = root.get(name);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError("'" + std::string(name) + "' must be a table");
    return n->as_table();
}

std::vector<std::string> strings(const toml::table& t, std::string_view key, std::string_view where) {
    std::vector<std::string> out;
    const toml::node* n = t.get(key);
    if (!n) return out;
    const toml::array* arr = n->as_array();
    if (!arr) throw ConfigError("'" + std::string(key) + "' in " + std::string(where) + " must be an array");
    for (const auto& e : *arr) {
        auto s = e.value<std::string>();
        if (!s) throw ConfigError("'" + std::string(key) + "' in " + std::string(where) + " must hold strings");
        out.push_back(*s);
    }
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::size_t non_negative(std::int64_t v, std::string_view what) {
    if (v < 0) throw ConfigError(std::string(what) + " must not be negative");
    return static_cast<std::size_t>(v);
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

void ServiceConfig::validate() const {
    if (secret.size() < kMinSecretBytes)
        throw ConfigError(std::string(kSecretEnv) + " must hold at least " + std::to_string(kMinSecretBytes) + " bytes");
    if (port < 0 || port > 65535) throw ConfigError("port out of range");
    if (corpus_dir.empty()) throw ConfigError("corpus.dir is required");
    if (!fs::is_directory(corpus_dir)) throw ConfigError("corpus directory does not exist: " + corpus_dir.string());
    if (font_paths.empty()) throw ConfigError("at least one font is required");
    for (const auto& f : font_paths)
        if (!fs::is_regular_file(f)) throw ConfigError("font file does not exist: " + f.string());
    if (!(font_size >= 8.0f && font_size <= 160.0f)) throw ConfigError("font_size must lie in [8, 160]");
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw ConfigError("difficulty must lie in [0, 1]");
    if (epoch.epoch_length.count() <= 0) throw ConfigError("epoch_seconds must be positive");
    if (!(rate_limit_per_minute > 0.0)) throw ConfigError("rate_limit.per_minute must be positive");
    if (store.capacity == 0) throw ConfigError("store.capacity must be positive");
    if (store.persistence_path) {
        const fs::path parent = store.persistence_path->parent_path();
        if (!parent.empty() && !fs::is_directory(parent))
            throw ConfigError("persistence directory does not exist: " + parent.string());
    }
    try {
        challenge.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const TransformRegistry reg = build_registry(registry);
    if (epoch.m >= reg.size()) throw ConfigError("obfuscation.m must be smaller than the registry size");
}

ServiceConfig parse_config(std::string_view toml_text, const fs::path& base_dir, const EnvLookup& env) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    check_keys(root, "config", {"server", "corpus", "render", "challenge", "store", "obfuscation", "rate_limit"});

    ServiceConfig c;
    if (const auto* s = section(root, "server")) {
        check_keys(*s, "server", {"host", "port", "cors_origins", "api_keys"});
        if (auto v = get<std::string>(*s, "host", "server")) c.host = *v;
        if (auto v = get<std::int64_t>(*s, "port", "server")) c.port = static_cast<int>(*v);
        c.cors_origins = strings(*s, "cors_origins", "server");
        c.api_keys = strings(*s, "api_keys", "server");
    }
    if (const auto* s = section(root, "corpus")) {
        check_keys(*s, "corpus", {"dir"});
        if (auto v = get<std::string>(*s, "dir", "corpus")) c.corpus_dir = resolve(base_dir, *v);
    }
    if (const auto* s = section(root, "render")) {
        check_keys(*s, "render", {"fonts", "font_size"});
        for (const auto& f : strings(*s, "fonts", "render")) c.font_paths.push_back(resolve(base_dir, f));
        if (auto v = get<double>(*s, "font_size", "render")) c.font_size = static_cast<float>(*v);
    }
    if (c.font_paths.empty()) c.font_paths = default_font_paths();

    if (const auto* s = section(root, "challenge")) {
        check_keys(*s, "challenge",
                   {"ttl_seconds", "max_attempts", "min_clusters", "max_clusters", "phrase_words", "existing_word",
                    "random_string", "phrase", "force_kind"});
        auto& p = c.challenge;
        if (auto v = get<std::int64_t>(*s, "ttl_seconds", "challenge")) p.ttl = std::chrono::seconds(*v);
        if (auto v = get<std::int64_t>(*s, "max_attempts", "challenge")) p.max_attempts = static_cast<int>(*v);
        if (auto v = get<std::int64_t>(*s, "min_clusters", "challenge")) p.min_clusters = non_negative(*v, "min_clusters");
        if (auto v = get<std::int64_t>(*s, "max_clusters", "challenge")) p.max_clusters = non_negative(*v, "max_clusters");
        if (auto v = get<std::int64_t>(*s, "phrase_words", "challenge")) p.phrase_words = non_negative(*v, "phrase_words");
        if (auto v = get<double>(*s, "existing_word", "challenge")) p.existing_word = *v;
        if (auto v = get<double>(*s, "random_string", "challenge")) p.random_string = *v;
        if (auto v = get<double>(*s, "phrase", "challenge")) p.phrase = *v;
        if (auto v = get<std::string>(*s, "force_kind", "challenge")) {
            bool found = false;
            for (auto k : {SampleKind::ExistingWord, SampleKind::RandomString, SampleKind::Phrase})
                if (*v == to_string(k)) {
                    p.force_kind = k;
                    found = true;
                }
            if (!found) throw ConfigError("unknown challenge.force_kind '" + *v + "'");
        }
    }
    if (const auto* s = section(root, "store")) {
        check_keys(*s, "store", {"capacity", "retention_seconds", "persistence"});
        if (auto v = get<std::int64_t>(*s, "capacity", "store")) c.store.capacity = non_negative(*v, "store.capacity");
        if (auto v = get<std::int64_t>(*s, "retention_seconds", "store"))
            c.store.retention = std::chrono::seconds(non_negative(*v, "store.retention_seconds"));
        if (auto v = get<std::string>(*s, "persistence", "store")) c.store.persistence_path = resolve(base_dir, *v);
    }
    if (const auto* s = section(root, "obfuscation")) {
        check_keys(*s, "obfuscation", {"difficulty", "epoch_seconds", "m", "rotation_seed", "counts", "ranges"});
        if (auto v = get<double>(*s, "difficulty", "obfuscation")) c.difficulty = *v;
        if (auto v = get<std::int64_t>(*s, "epoch_seconds", "obfuscation")) c.epoch.epoch_length = std::chrono::seconds(*v);
        if (auto v = get<std::int64_t>(*s, "m", "obfuscation")) c.epoch.m = non_negative(*v, "obfuscation.m");
        if (auto v = get<std::int64_t>(*s, "rotation_seed", "obfuscation")) {
            c.epoch.rotation_seed = static_cast<std::uint64_t>(*v);
            c.rotation_seed_set = true;
        }
        if (const auto* counts = section(*s, "counts")) {
            for (const auto& [k, node] : *counts) {
                const auto fam = family_from_string(k.str());
                if (!fam) throw ConfigError("unknown transform family '" + std::string(k.str()) + "'");
                const auto v = node.value<std::int64_t>();
                if (!v) throw ConfigError("count for " + std::string(k.str()) + " must be an integer");
                c.registry.counts[*fam] = non_negative(*v, "family count");
            }
        }
        if (const auto* ranges = section(*s, "ranges")) {
            for (const auto& [k, node] : *ranges) {
                const auto fam = family_from_string(k.str());
                if (!fam) throw ConfigError("unknown transform family '" + std::string(k.str()) + "'");
                const toml::table* params = node.as_table();
                if (!params) throw ConfigError("ranges." + std::string(k.str()) + " must be a table");
                for (const auto& [pname, pnode] : *params) {
                    const toml::array* arr = pnode.as_array();
                    if (!arr || arr->size() != 2 || !(*arr)[0].is_number() || !(*arr)[1].is_number())
                        throw ConfigError("range " + std::string(k.str()) + "." + std::string(pname.str()) +
                                          " must be [lo, hi]");
                    ParamRange r;
                    r.name = std::string(pname.str());
                    r.lo = (*arr)[0].value<double>().value();
                    r.hi = (*arr)[1].value<double>().value();
                    double neutral = r.lo;
                    for (const auto& d : default_family_spec(*fam).params)
                        if (d.name == r.name) neutral = d.neutral;
                    r.neutral = std::clamp(neutral, std::min(r.lo, r.hi), std::max(r.lo, r.hi));
                    c.registry.ranges[*fam].push_back(r);
                }
            }
        }
    }
    if (const auto* s = section(root, "rate_limit")) {
        check_keys(*s, "rate_limit", {"per_minute"});
        if (auto v = get<double>(*s, "per_minute", "rate_limit")) c.rate_limit_per_minute = *v;
    }

    if (auto secret = env(kSecretEnv)) c.secret = *secret;
    c.validate();
    return c;
}

ServiceConfig load_config(const fs::path& path, const EnvLookup& env) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), fs::absolute(path).parent_path(), env);
}

}  // namespace deva
