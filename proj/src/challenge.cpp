#include "deva/challenge.hpp"

#include <fstream>

#include <json.hpp>

namespace deva {

namespace {

using json = nlohmann::json;

std::string le_bytes(std::uint64_t v) {
    std::string out(8, '\0');
    for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    return out;
}

std::uint64_t u64_at(const crypto::Digest& d, std::size_t offset) {
    std::uint64_t v = 0;
    for (std::size_t i = 8; i-- > 0;) v = (v << 8) | d[offset + i];
    return v;
}

std::int64_t to_ms(TimePoint t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

TimePoint from_ms(std::int64_t ms) {
    return TimePoint(std::chrono::duration_cast<TimePoint::duration>(std::chrono::milliseconds(ms)));
}

std::optional<ChallengeState> state_from_string(std::string_view s) {
    for (auto st : {ChallengeState::Pending, ChallengeState::Consumed, ChallengeState::Expired,
                    ChallengeState::Superseded})
        if (s == to_string(st)) return st;
    return std::nullopt;
}

constexpr int kMaxSampleTries = 8;

}  // namespace

const char* to_string(ChallengeState state) noexcept {
    switch (state) {
        case ChallengeState::Pending: return "pending";
        case ChallengeState::Consumed: return "consumed";
        case ChallengeState::Expired: return "expired";
        case ChallengeState::Superseded: return "superseded";
    }
    return "pending";
}

const char* to_string(VerifyResult result) noexcept {
    switch (result) {
        case VerifyResult::Pass: return "pass";
        case VerifyResult::Fail: return "fail";
        case VerifyResult::Expired: return "expired";
        case VerifyResult::Unknown: return "unknown";
        case VerifyResult::AlreadyUsed: return "already_used";
    }
    return "unknown";
}

void ChallengePolicy::validate() const {
    if (existing_word < 0 || random_string < 0 || phrase < 0 || existing_word + random_string + phrase <= 0)
        throw std::invalid_argument("challenge kind mix must be non-negative with a positive total");
    if (min_clusters < 1 || min_clusters > max_clusters)
        throw std::invalid_argument("challenge cluster bounds need 1 <= min <= max");
    if (phrase_words < 1) throw std::invalid_argument("phrase_words must be at least 1");
    if (ttl.count() <= 0) throw std::invalid_argument("ttl must be positive");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
    weights.validate();
}

ChallengeSpec generate_spec(std::uint64_t user_seed, const ChallengePolicy& policy, std::string_view secret,
                            std::uint64_t nonce) {
    policy.validate();
    std::string msg = "deva-spec";
    msg.push_back('\0');
    msg += le_bytes(user_seed);
    msg += le_bytes(nonce);
    const crypto::Digest d = crypto::hmac_sha256(secret, msg);

    ChallengeSpec spec;
    spec.user_seed = user_seed;
    spec.nonce = nonce;
    spec.text_seed = u64_at(d, 0);
    spec.obfuscation_seed = u64_at(d, 8);
    spec.ttl = policy.ttl;

    SampleConstraints& c = spec.constraints;
    c.min_clusters = policy.min_clusters;
    c.max_clusters = policy.max_clusters;
    c.phrase_words = policy.phrase_words;
    c.weights = policy.weights;
    if (policy.force_kind) {
        c.kind = *policy.force_kind;
    } else {
        Rng kind_rng(u64_at(d, 16));
        const double mix[] = {policy.existing_word, policy.random_string, policy.phrase};
        static constexpr SampleKind kinds[] = {SampleKind::ExistingWord, SampleKind::RandomString, SampleKind::Phrase};
        c.kind = kinds[kind_rng.weighted(mix)];
    }
    return spec;
}

std::string new_challenge_id() { return crypto::to_hex(crypto::random_bytes(16)); }

// --- store ------------------------------------------------------------------

ChallengeStore::ChallengeStore(StoreConfig config) : config_(std::move(config)) {
    if (config_.capacity == 0) throw std::invalid_argument("store capacity must be positive");
    if (config_.persistence_path) replay();
}

void ChallengeStore::replay() {
    std::ifstream in(*config_.persistence_path);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("op") || !j.contains("id")) continue;
        const std::string op = j.value("op", "");
        const std::string id = j.value("id", "");
        if (op == "issue") {
            Challenge c;
            c.id = id;
            const auto digest = crypto::from_hex(j.value("digest", ""));
            if (digest.size() != c.answer_digest.size()) continue;
            std::copy(digest.begin(), digest.end(), c.answer_digest.begin());
            c.issued_at = from_ms(j.value("issued_at", std::int64_t{0}));
            c.expires_at = from_ms(j.value("expires_at", std::int64_t{0}));
            c.max_attempts = j.value("max_attempts", 3);
            c.user_seed = j.value("user_seed", std::uint64_t{0});
            items_[id] = c;
        } else if (op == "state") {
            auto it = items_.find(id);
            if (it == items_.end()) continue;
            if (auto st = state_from_string(j.value("state", ""))) it->second.state = *st;
            it->second.attempts = std::max(it->second.attempts, j.value("attempts", 0));
        } else if (op == "evict") {
            items_.erase(id);
        }
    }
}

void ChallengeStore::log(const std::string& line) {
    if (!config_.persistence_path) return;
    std::ofstream out(*config_.persistence_path, std::ios::app);
    out << line << '\n';
    out.flush();
}

void ChallengeStore::log_state(const Challenge& c) {
    if (!config_.persistence_path) return;
    log(json{{"op", "state"}, {"id", c.id}, {"state", to_string(c.state)}, {"attempts", c.attempts}}.dump());
}

std::size_t ChallengeStore::sweep(TimePoint now) {
    std::lock_guard lock(mu_);
    std::size_t removed = 0;
    for (auto it = items_.begin(); it != items_.end();) {
        if (it->second.expires_at + config_.retention < now) {
            if (config_.persistence_path) log(json{{"op", "evict"}, {"id", it->first}}.dump());
            it = items_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

void ChallengeStore::insert(const Challenge& challenge, TimePoint now) {
    sweep(now);
    std::lock_guard lock(mu_);
    if (items_.size() >= config_.capacity)
        throw StoreFull("challenge store holds " + std::to_string(items_.size()) + " entries");
    if (items_.contains(challenge.id)) throw std::logic_error("duplicate challenge id");
    items_.emplace(challenge.id, challenge);
    if (config_.persistence_path)
        log(json{{"op", "issue"},
                 {"id", challenge.id},
                 {"digest", crypto::to_hex(challenge.answer_digest)},
                 {"issued_at", to_ms(challenge.issued_at)},
                 {"expires_at", to_ms(challenge.expires_at)},
                 {"max_attempts", challenge.max_attempts},
                 {"user_seed", challenge.user_seed}}
                .dump());
}

VerifyResult ChallengeStore::verify(const std::string& id, const crypto::Digest& response_digest, TimePoint now) {
    std::lock_guard lock(mu_);
    const auto it = items_.find(id);
    if (it == items_.end()) return VerifyResult::Unknown;
    Challenge& c = it->second;
    if (now > c.expires_at) {
        if (c.state == ChallengeState::Pending) {
            c.state = ChallengeState::Expired;
            log_state(c);
        }
        return VerifyResult::Expired;
    }
    if (c.state == ChallengeState::Expired) return VerifyResult::Expired;
    if (c.state != ChallengeState::Pending) return VerifyResult::AlreadyUsed;
    if (crypto::equal(response_digest, c.answer_digest)) {
        c.state = ChallengeState::Consumed;
        log_state(c);
        return VerifyResult::Pass;
    }
    ++c.attempts;
    if (c.attempts >= c.max_attempts) c.state = ChallengeState::Expired;
    log_state(c);
    return VerifyResult::Fail;
}

Challenge ChallengeStore::supersede(const std::string& id, TimePoint now) {
    std::lock_guard lock(mu_);
    const auto it = items_.find(id);
    if (it == items_.end()) throw UnknownChallenge("unknown challenge " + id);
    Challenge& c = it->second;
    if (c.state == ChallengeState::Pending) {
        c.state = now > c.expires_at ? ChallengeState::Expired : ChallengeState::Superseded;
        log_state(c);
    }
    return c;
}

std::optional<Challenge> ChallengeStore::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = items_.find(id);
    if (it == items_.end()) return std::nullopt;
    return it->second;
}

std::size_t ChallengeStore::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

// --- engine -----------------------------------------------------------------

ChallengeEngine::ChallengeEngine(const Corpus& corpus, const Obfuscator& obfuscator, TransformRegistry registry,
                                 EpochPolicy epoch, ChallengePolicy policy, std::string secret, const Clock& clock,
                                 StoreConfig store)
    : corpus_(corpus),
      obfuscator_(obfuscator),
      registry_(std::move(registry)),
      epoch_(epoch),
      policy_(std::move(policy)),
      secret_(std::move(secret)),
      clock_(clock),
      store_(std::move(store)) {
    policy_.validate();
    if (secret_.empty()) throw std::invalid_argument("engine secret must not be empty");
    if (epoch_.m > registry_.size()) throw ConfigError("active subset larger than the registry");
}

crypto::Digest ChallengeEngine::answer_digest(std::string_view normalized_answer) const {
    std::string msg = "deva-answer";
    msg.push_back('\0');
    msg.append(normalized_answer);
    return crypto::hmac_sha256(secret_, msg);
}

std::pair<ChallengeText, Raster> ChallengeEngine::materialize(const ChallengeSpec& spec, TimePoint t) const {
    const auto subset = active_subset(registry_, epoch_, epoch_.epoch_at(t));
    const SampleConstraints constraints = apply_spec_stage(spec.constraints, subset, obfuscator_.difficulty());
    Rng rng(spec.text_seed);
    for (int attempt = 1;; ++attempt) {
        ChallengeText text = corpus_.sample_word(constraints, rng);
        try {
            obfuscator_.renderer().check_coverage(text);
            Raster image = obfuscator_.apply(text, subset, spec.obfuscation_seed).raster;
            return {std::move(text), std::move(image)};
        } catch (const CanvasOverflow&) {
            if (attempt >= kMaxSampleTries) throw;
        } catch (const MissingGlyph&) {
            if (attempt >= kMaxSampleTries) throw;
        }
    }
}

IssuedChallenge ChallengeEngine::issue(const ChallengeSpec& spec) {
    const TimePoint now = clock_.now();
    auto [text, image] = materialize(spec, now);

    IssuedChallenge out;
    Challenge& c = out.challenge;
    c.id = new_challenge_id();
    c.answer_digest = answer_digest(text.normalized);
    c.issued_at = now;
    c.expires_at = now + spec.ttl;
    c.max_attempts = policy_.max_attempts;
    c.user_seed = spec.user_seed;
    out.png = encode_png(image);
    out.answer = std::move(text.normalized);
    store_.insert(c, now);
    return out;
}

IssuedChallenge ChallengeEngine::issue_for(std::uint64_t user_seed) {
    return issue(generate_spec(user_seed, policy_, secret_, crypto::random_u64()));
}

VerifyResult ChallengeEngine::verify(const std::string& id, std::string_view response) {
    crypto::Digest digest{};
    bool valid = true;
    try {
        digest = answer_digest(normalize(response));
    } catch (const std::exception&) {
        valid = false;
    }
    if (!valid) digest.fill(0);
    return store_.verify(id, digest, clock_.now());
}

IssuedChallenge ChallengeEngine::refresh(const std::string& id) {
    const auto existing = store_.find(id);
    if (!existing) throw UnknownChallenge("unknown challenge " + id);
    if (policy_.allow_refresh && !policy_.allow_refresh(id)) throw RefreshDenied("refresh refused for " + id);
    const Challenge old = store_.supersede(id, clock_.now());
    return issue(generate_spec(old.user_seed, policy_, secret_, crypto::random_u64()));
}

}  // namespace deva
