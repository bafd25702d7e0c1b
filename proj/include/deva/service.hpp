#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "deva/challenge.hpp"
#include "deva/config.hpp"
#include "deva/corpus.hpp"
#include "deva/obfuscate.hpp"
#include "deva/render.hpp"

namespace deva {

struct MetricsSnapshot {
    std::uint64_t issued = 0;
    std::uint64_t passed = 0;
    std::uint64_t failed = 0;
    std::uint64_t expired = 0;
    std::uint64_t refreshed = 0;
    std::uint64_t rate_limited = 0;

    std::map<std::string, std::uint64_t> as_map() const;
};

/// Token bucket per client key: `per_minute` capacity, refilled continuously.
class RateLimiter {
public:
    RateLimiter(double per_minute, const Clock& clock);
    bool allow(const std::string& key);

private:
    struct Bucket {
        double tokens;
        TimePoint last;
    };
    double capacity_;
    const Clock& clock_;
    std::mutex mu_;
    std::unordered_map<std::string, Bucket> buckets_;
};

/// The HTTP API. Owns the corpus, renderer, obfuscator and challenge engine.
class Service {
public:
    explicit Service(ServiceConfig config, const Clock& clock = default_clock());
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds config.host:config.port (port 0 picks a free one) and returns the bound port.
    int bind();
    /// Serves on the bound socket until stop(). Returns false if the socket failed.
    bool run();
    void stop();
    bool running() const;

    MetricsSnapshot metrics() const;
    const ServiceConfig& config() const noexcept { return config_; }
    Corpus& corpus() noexcept { return *corpus_; }
    ChallengeEngine& engine() noexcept { return *engine_; }

    static const Clock& default_clock();

private:
    struct Http;

    ServiceConfig config_;
    const Clock& clock_;
    std::unique_ptr<Corpus> corpus_;
    std::unique_ptr<Renderer> renderer_;
    std::unique_ptr<Obfuscator> obfuscator_;
    std::unique_ptr<ChallengeEngine> engine_;
    RateLimiter limiter_;

    std::atomic<std::uint64_t> issued_{0}, passed_{0}, failed_{0}, expired_{0}, refreshed_{0}, rate_limited_{0};
    std::unique_ptr<Http> http_;
};

/// RFC 3339 UTC with millisecond precision.
std::string format_timestamp(TimePoint t);

}  // namespace deva
