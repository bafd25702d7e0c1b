#include "deva/service.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>

#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>
#include <json.hpp>

namespace deva {

namespace {

using json = nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

}  // namespace

std::string format_timestamp(TimePoint t) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
    const int frac = static_cast<int>(ms - static_cast<std::int64_t>(secs) * 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
    return buf;
}

std::map<std::string, std::uint64_t> MetricsSnapshot::as_map() const {
    return {{"issued", issued},   {"passed", passed},       {"failed", failed},
            {"expired", expired}, {"refreshed", refreshed}, {"rate_limited", rate_limited}};
}

RateLimiter::RateLimiter(double per_minute, const Clock& clock) : capacity_(per_minute), clock_(clock) {
    if (!(per_minute > 0.0)) throw std::invalid_argument("rate limit must be positive");
}

bool RateLimiter::allow(const std::string& key) {
    const TimePoint now = clock_.now();
    std::lock_guard lock(mu_);
    auto [it, fresh] = buckets_.try_emplace(key, Bucket{capacity_, now});
    Bucket& b = it->second;
    if (!fresh) {
        const double elapsed = std::chrono::duration<double>(now - b.last).count();
        if (elapsed > 0) b.tokens = std::min(capacity_, b.tokens + elapsed * capacity_ / 60.0);
        b.last = std::max(b.last, now);
    }
    if (b.tokens < 1.0) return false;
    b.tokens -= 1.0;
    return true;
}

struct Service::Http {
    httplib::Server server;
    std::mutex mu;
    bool bound = false;
};

const Clock& Service::default_clock() {
    static const SystemClock clock;
    return clock;
}

Service::Service(ServiceConfig config, const Clock& clock)
    : config_(std::move(config)),
      clock_(clock),
      limiter_(config_.rate_limit_per_minute, clock),
      http_(std::make_unique<Http>()) {
    config_.validate();
    if (!config_.rotation_seed_set)
        config_.epoch.rotation_seed = crypto::to_u64(crypto::hmac_sha256(config_.secret, "deva-rotation"));

    corpus_ = std::make_unique<Corpus>(config_.corpus_dir);
    RenderConfig rc;
    rc.font_size = config_.font_size;
    renderer_ = std::make_unique<Renderer>(Renderer::from_files(config_.font_paths, rc));
    obfuscator_ = std::make_unique<Obfuscator>(*renderer_, config_.difficulty);
    engine_ = std::make_unique<ChallengeEngine>(*corpus_, *obfuscator_, build_registry(config_.registry), config_.epoch,
                                                config_.challenge, config_.secret, clock_, config_.store);

    auto& srv = http_->server;

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_header("Origin")) return httplib::Server::HandlerResponse::Unhandled;
        const std::string origin = req.get_header_value("Origin");
        const auto& allowed = config_.cors_origins;
        if (std::find(allowed.begin(), allowed.end(), origin) == allowed.end()) {
            send_error(res, 403, "origin not allowed");
            return httplib::Server::HandlerResponse::Handled;
        }
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        if (req.method == "OPTIONS") {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, X-API-Key");
            res.set_header("Access-Control-Max-Age", "600");
            res.status = 204;
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    // Resolves the rate-limit key; an empty result means the request was rejected.
    const auto client_key = [this](const httplib::Request& req, httplib::Response& res) -> std::optional<std::string> {
        if (req.has_header("X-API-Key")) {
            const std::string key = req.get_header_value("X-API-Key");
            const auto& keys = config_.api_keys;
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                send_error(res, 401, "unknown api key");
                return std::nullopt;
            }
            return "key:" + key;
        }
        return "ip:" + req.remote_addr;
    };

    const auto admit = [this, client_key](const httplib::Request& req, httplib::Response& res) {
        const auto key = client_key(req, res);
        if (!key) return false;
        if (!limiter_.allow(*key)) {
            ++rate_limited_;
            send_error(res, 429, "rate limit exceeded");
            return false;
        }
        if (corpus_->empty()) {
            send_error(res, 503, "corpus is empty");
            return false;
        }
        return true;
    };

    const auto send_challenge = [](httplib::Response& res, const IssuedChallenge& issued) {
        send_json(res, 200,
                  json{{"challenge_id", issued.challenge.id},
                       {"image", crypto::base64_encode(issued.png)},
                       {"expires_at", format_timestamp(issued.challenge.expires_at)},
                       {"media_type", "image/png"}});
    };

    // Any failure to build an image is reported as unavailability, never with the sampled text.
    const auto guarded = [](httplib::Response& res, auto&& body) {
        try {
            body();
        } catch (const NoCandidate&) {
            send_error(res, 503, "no challenge text available");
        } catch (const StoreFull&) {
            send_error(res, 503, "challenge store is full");
        } catch (const CanvasOverflow&) {
            send_error(res, 503, "challenge rendering failed");
        } catch (const MissingGlyph&) {
            send_error(res, 503, "challenge rendering failed");
        }
    };

    srv.Post("/api/v1/challenge", [this, admit, send_challenge, guarded](const httplib::Request& req,
                                                                           httplib::Response& res) {
        std::uint64_t user_seed = crypto::random_u64();
        if (!req.body.empty()) {
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "malformed body");
            if (body.contains("user_seed")) {
                if (!body["user_seed"].is_number_unsigned()) return send_error(res, 400, "user_seed must be unsigned");
                user_seed = body["user_seed"].get<std::uint64_t>();
            }
        }
        if (!admit(req, res)) return;
        guarded(res, [&] {
            const IssuedChallenge issued = engine_->issue_for(user_seed);
            ++issued_;
            send_challenge(res, issued);
        });
    });

    srv.Post("/api/v1/verify", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("challenge_id") || !body.contains("answer") ||
            !body["challenge_id"].is_string() || !body["answer"].is_string())
            return send_error(res, 400, "expected {challenge_id: string, answer: string}");
        const VerifyResult r =
            engine_->verify(body["challenge_id"].get<std::string>(), body["answer"].get<std::string>());
        switch (r) {
            case VerifyResult::Pass: ++passed_; break;
            case VerifyResult::Fail: ++failed_; break;
            case VerifyResult::Expired: ++expired_; break;
            default: break;
        }
        send_json(res, 200, json{{"result", to_string(r)}});
    });

    srv.Post(R"(/api/v1/challenge/([0-9A-Za-z]+)/refresh)",
             [this, admit, send_challenge, guarded](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!engine_->store().find(id)) return send_error(res, 404, "unknown challenge");
                 if (!admit(req, res)) return;
                 guarded(res, [&] {
                     try {
                         const IssuedChallenge issued = engine_->refresh(id);
                         ++refreshed_;
                         ++issued_;
                         send_challenge(res, issued);
                     } catch (const UnknownChallenge&) {
                         send_error(res, 404, "unknown challenge");
                     } catch (const RefreshDenied&) {
                         send_error(res, 429, "refresh refused");
                     }
                 });
             });

    srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, json{{"status", "ok"}, {"corpus_words", corpus_->stats().words}});
    });

    srv.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
        json body = json::object();
        for (const auto& [k, v] : metrics().as_map()) body[k] = v;
        send_json(res, 200, body);
    });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        send_error(res, 500, "internal error");
    });
}

Service::~Service() { stop(); }

int Service::bind() {
    std::lock_guard lock(http_->mu);
    int port = config_.port;
    if (port == 0) {
        port = http_->server.bind_to_any_port(config_.host);
    } else if (!http_->server.bind_to_port(config_.host, port)) {
        port = -1;
    }
    http_->bound = port > 0;
    return port;
}

bool Service::run() {
    {
        std::lock_guard lock(http_->mu);
        if (!http_->bound) return false;
    }
    return http_->server.listen_after_bind();
}

void Service::stop() {
    if (http_) http_->server.stop();
}

bool Service::running() const { return http_ && http_->server.is_running(); }

MetricsSnapshot Service::metrics() const {
    MetricsSnapshot m;
    m.issued = issued_.load();
    m.passed = passed_.load();
    m.failed = failed_.load();
    m.expired = expired_.load();
    m.refreshed = refreshed_.load();
    m.rate_limited = rate_limited_.load();
    return m;
}

}  // namespace deva
