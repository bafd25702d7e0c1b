#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deva/challenge.hpp"
#include "deva/obfuscate.hpp"

namespace deva {

inline constexpr std::size_t kMinSecretBytes = 32;
inline constexpr const char* kSecretEnv = "DEVA_SECRET";

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path corpus_dir;
    std::vector<std::filesystem::path> font_paths;
    float font_size = 48.0f;

    RegistryConfig registry = RegistryConfig::defaults();
    EpochPolicy epoch;
    bool rotation_seed_set = false;  // otherwise derived from the secret
    double difficulty = 0.6;

    ChallengePolicy challenge;
    StoreConfig store;

    double rate_limit_per_minute = 10.0;
    std::vector<std::string> cors_origins;
    std::vector<std::string> api_keys;

    std::string secret;  // environment only

    /// Throws ConfigError on any broken invariant.
    void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

std::optional<std::string> process_env(const std::string& name);

/// Parses a TOML file. Relative paths resolve against the file's directory; the secret comes from
/// DEVA_SECRET. Throws ConfigError.
ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);
ServiceConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                           const EnvLookup& env = process_env);

}  // namespace deva
