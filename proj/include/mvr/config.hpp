#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvr/clients.hpp"
#include "mvr/pipelines.hpp"

namespace mvr::config {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message);
};

// Minimal TOML-subset reader: [section] headers, key = value with quoted
// strings, integers, floats, and booleans. Comments start with '#'.
struct KeyedFile {
    // flattened "section.key" -> raw value
    std::map<std::string, std::string> values;

    static KeyedFile parse(const std::string& text);
    static KeyedFile load(const std::string& path);

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
};

struct BackendSpec {
    enum class Kind { Scripted, Http, Identity };

    Kind kind = Kind::Scripted;
    std::string script_path;
    bool strict = true;
    std::string default_reply = "True";
    clients::BackendConfig http;
};

struct RunConfig {
    std::map<std::string, std::string> dataset_paths;  // language -> path
    pipelines::Strategy strategy = pipelines::Strategy::EndToEnd;
    std::map<std::string, BackendSpec> backends;  // role -> spec
    std::string template_dir;                     // empty: built-in defaults
    int max_in_flight = 4;
    std::string out_dir = "out";
    int bucket_width = 5;
    bool strict_scoring = false;
    unsigned seed = 0;
};

// Loads and validates a RunConfig; referenced files must exist, and every
// role the strategy requires must have exactly one backend bound.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_keyed(const KeyedFile& kf, const std::string& config_dir);

std::vector<std::string> required_roles(pipelines::Strategy s);

}  // namespace mvr::config
