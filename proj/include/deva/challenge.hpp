#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "deva/corpus.hpp"
#include "deva/crypto.hpp"
#include "deva/obfuscate.hpp"

namespace deva {

using TimePoint = std::chrono::system_clock::time_point;

class Clock {
public:
    virtual ~Clock() = default;
    virtual TimePoint now() const = 0;
};

class SystemClock final : public Clock {
public:
    TimePoint now() const override { return std::chrono::system_clock::now(); }
};

/// Settable clock for tests and offline generation.
class ManualClock final : public Clock {
public:
    explicit ManualClock(TimePoint start = TimePoint{}) : ns_(start.time_since_epoch().count()) {}
    TimePoint now() const override { return TimePoint(TimePoint::duration(ns_.load())); }
    void set(TimePoint t) { ns_.store(t.time_since_epoch().count()); }
    void advance(std::chrono::nanoseconds d) {
        ns_.fetch_add(std::chrono::duration_cast<TimePoint::duration>(d).count());
    }

private:
    std::atomic<TimePoint::rep> ns_;
};

struct ChallengePolicy {
    double existing_word = 0.7;
    double random_string = 0.2;
    double phrase = 0.1;
    std::optional<SampleKind> force_kind;
    std::size_t min_clusters = 2;
    std::size_t max_clusters = 6;
    std::size_t phrase_words = 2;
    std::chrono::seconds ttl{90};
    int max_attempts = 3;
    GenerationWeights weights{};
    /// Consulted before a refresh; returning false refuses it. No quota by default.
    std::function<bool(const std::string& old_id)> allow_refresh;

    void validate() const;
};

struct ChallengeSpec {
    SampleConstraints constraints;
    std::uint64_t text_seed = 0;
    std::uint64_t obfuscation_seed = 0;
    std::chrono::seconds ttl{90};
    std::uint64_t user_seed = 0;
    std::uint64_t nonce = 0;

    friend bool operator==(const ChallengeSpec&, const ChallengeSpec&) = default;
};

/// Seeds are keyed by the server secret, so clients cannot predict them from their own seed.
ChallengeSpec generate_spec(std::uint64_t user_seed, const ChallengePolicy& policy, std::string_view secret,
                            std::uint64_t nonce);

enum class ChallengeState { Pending, Consumed, Expired, Superseded };
enum class VerifyResult { Pass, Fail, Expired, Unknown, AlreadyUsed };

const char* to_string(ChallengeState state) noexcept;
const char* to_string(VerifyResult result) noexcept;

struct Challenge {
    std::string id;  // 32 hex digits
    crypto::Digest answer_digest{};
    TimePoint issued_at{};
    TimePoint expires_at{};
    ChallengeState state = ChallengeState::Pending;
    int attempts = 0;
    int max_attempts = 3;
    std::uint64_t user_seed = 0;
};

class StoreFull : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownChallenge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RefreshDenied : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StoreConfig {
    std::size_t capacity = 100000;
    /// How long a finished or expired challenge is kept before eviction.
    std::chrono::seconds retention{300};
    /// Append-only JSON-lines log of state transitions, replayed on open.
    std::optional<std::filesystem::path> persistence_path;
};

/// id -> Challenge map. One mutex makes every operation atomic per id.
class ChallengeStore {
public:
    explicit ChallengeStore(StoreConfig config = {});

    ChallengeStore(const ChallengeStore&) = delete;
    ChallengeStore& operator=(const ChallengeStore&) = delete;

    /// Sweeps evictable entries first; throws StoreFull when still at capacity.
    void insert(const Challenge& challenge, TimePoint now);
    VerifyResult verify(const std::string& id, const crypto::Digest& response_digest, TimePoint now);
    /// Pending -> Superseded (other states unchanged). Returns the record; throws UnknownChallenge.
    Challenge supersede(const std::string& id, TimePoint now);
    /// Drops entries with expires_at + retention < now. Returns how many were removed.
    std::size_t sweep(TimePoint now);

    std::optional<Challenge> find(const std::string& id) const;
    std::size_t size() const;
    const StoreConfig& config() const noexcept { return config_; }

private:
    void replay();
    void log(const std::string& line);
    void log_state(const Challenge& c);

    StoreConfig config_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Challenge> items_;
};

struct IssuedChallenge {
    Challenge challenge;
    std::vector<std::uint8_t> png;
    std::string answer;  // held only by the caller of issue(); never stored
};

/// Wires sampling, rendering and obfuscation into the issue/verify/refresh lifecycle.
class ChallengeEngine {
public:
    ChallengeEngine(const Corpus& corpus, const Obfuscator& obfuscator, TransformRegistry registry, EpochPolicy epoch,
                    ChallengePolicy policy, std::string secret, const Clock& clock, StoreConfig store = {});

    /// Throws NoCandidate, MissingGlyph, CanvasOverflow or StoreFull.
    IssuedChallenge issue(const ChallengeSpec& spec);
    /// generate_spec with a fresh random nonce, then issue.
    IssuedChallenge issue_for(std::uint64_t user_seed);
    VerifyResult verify(const std::string& id, std::string_view response);
    /// A Pending original becomes Superseded; terminal ones keep their state.
    /// Throws UnknownChallenge when id is absent, RefreshDenied when the policy hook refuses.
    IssuedChallenge refresh(const std::string& id);

    /// The text and image a spec would yield at time t, without storing anything.
    std::pair<ChallengeText, Raster> materialize(const ChallengeSpec& spec, TimePoint t) const;

    crypto::Digest answer_digest(std::string_view normalized_answer) const;

    ChallengeStore& store() noexcept { return store_; }
    const ChallengePolicy& policy() const noexcept { return policy_; }
    const TransformRegistry& registry() const noexcept { return registry_; }
    const EpochPolicy& epoch_policy() const noexcept { return epoch_; }
    const Clock& clock() const noexcept { return clock_; }

private:
    const Corpus& corpus_;
    const Obfuscator& obfuscator_;
    TransformRegistry registry_;
    EpochPolicy epoch_;
    ChallengePolicy policy_;
    std::string secret_;
    const Clock& clock_;
    ChallengeStore store_;
};

/// 128 random bits as hex.
std::string new_challenge_id();

}  // namespace deva
