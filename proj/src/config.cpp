#include "mvr/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mvr::config {

namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& message) : std::runtime_error(message) {}

static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

KeyedFile KeyedFile::parse(const std::string& text) {
    KeyedFile kf;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        // strip a trailing comment outside quotes
        if (!value.empty() && value.front() == '"') {
            auto close = value.find('"', 1);
            if (close == std::string::npos)
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated string");
            value = value.substr(1, close - 1);
        } else {
            auto hash = value.find('#');
            if (hash != std::string::npos) value = trim(value.substr(0, hash));
        }
        std::string full = section.empty() ? key : section + "." + key;
        kf.values[full] = value;
    }
    return kf;
}

KeyedFile KeyedFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::optional<std::string> KeyedFile::get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) return {};
    return it->second;
}

std::string KeyedFile::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

int KeyedFile::get_int(const std::string& key, int fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        return std::stoi(*v);
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": expected an integer, got \"" + *v + "\"");
    }
}

bool KeyedFile::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    throw ConfigError("key " + key + ": expected true or false, got \"" + *v + "\"");
}

std::vector<std::string> KeyedFile::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, _] : values)
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
}

std::vector<std::string> required_roles(pipelines::Strategy s) {
    switch (s) {
        case pipelines::Strategy::EndToEnd: return {"vision"};
        case pipelines::Strategy::TranslateTest: return {"translator", "vision"};
        case pipelines::Strategy::VisProg: return {"translator", "codegen", "vqa"};
        case pipelines::Strategy::CaptionReason:
            return {"translator", "instruction", "caption", "reasoning"};
    }
    return {};
}

static std::string resolve_path(const std::string& config_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || config_dir.empty()) return path;
    return (fs::path(config_dir) / path).string();
}

RunConfig run_config_from_keyed(const KeyedFile& kf, const std::string& config_dir) {
    RunConfig rc;

    std::string strategy = kf.get_string("strategy", "end_to_end");
    auto s = pipelines::strategy_from_name(strategy);
    if (!s) throw ConfigError("unknown strategy \"" + strategy + "\"");
    rc.strategy = *s;

    for (const auto& key : kf.keys_with_prefix("datasets.")) {
        std::string lang = key.substr(std::string("datasets.").size());
        rc.dataset_paths[lang] = resolve_path(config_dir, kf.values.at(key));
    }
    if (auto single = kf.get("dataset")) rc.dataset_paths[""] = resolve_path(config_dir, *single);
    if (rc.dataset_paths.empty()) throw ConfigError("no dataset configured");

    rc.template_dir = resolve_path(config_dir, kf.get_string("template_dir", ""));
    rc.max_in_flight = kf.get_int("max_in_flight", 4);
    rc.out_dir = resolve_path(config_dir, kf.get_string("out_dir", "out"));
    rc.bucket_width = kf.get_int("bucket_width", 5);
    rc.strict_scoring = kf.get_bool("strict", false);
    rc.seed = static_cast<unsigned>(kf.get_int("seed", 0));

    std::set<std::string> roles;
    for (const auto& key : kf.keys_with_prefix("backends."))
        roles.insert(key.substr(std::string("backends.").size(),
                                key.find('.', std::string("backends.").size()) -
                                    std::string("backends.").size()));
    for (const auto& role : roles) {
        std::string prefix = "backends." + role + ".";
        BackendSpec spec;
        std::string kind = kf.get_string(prefix + "kind", "");
        if (kind.empty()) {
            if (kf.get(prefix + "script")) kind = "script";
            else if (kf.get(prefix + "base_url")) kind = "http";
            else throw ConfigError("backend " + role + ": needs kind, script, or base_url");
        }
        if (kind == "identity") {
            spec.kind = BackendSpec::Kind::Identity;
        } else if (kind == "script") {
            spec.kind = BackendSpec::Kind::Scripted;
            spec.script_path = resolve_path(config_dir, kf.get_string(prefix + "script", ""));
            if (spec.script_path.empty())
                throw ConfigError("backend " + role + ": scripted backend needs script = path");
            spec.strict = kf.get_bool(prefix + "strict", true);
            spec.default_reply = kf.get_string(prefix + "default_reply", "True");
        } else if (kind == "http") {
            spec.kind = BackendSpec::Kind::Http;
            spec.http.name = role;
            spec.http.base_url = kf.get_string(prefix + "base_url", "");
            if (spec.http.base_url.empty())
                throw ConfigError("backend " + role + ": http backend needs base_url");
            spec.http.model_name = kf.get_string(prefix + "model", "");
            spec.http.max_tokens = kf.get_int(prefix + "max_tokens", 512);
            spec.http.max_retries = kf.get_int(prefix + "max_retries", 3);
            if (auto t = kf.get(prefix + "temperature")) spec.http.temperature = std::stod(*t);
            if (auto t = kf.get(prefix + "timeout")) spec.http.timeout_s = std::stod(*t);
            spec.http.credential = clients::credential_from_env(role);
        } else {
            throw ConfigError("backend " + role + ": unknown kind \"" + kind + "\"");
        }
        rc.backends[role] = spec;
    }

    for (const auto& role : required_roles(rc.strategy)) {
        if (role == "translator" && !rc.backends.count(role)) {
            // identity translator is a reasonable default for all-English runs
            BackendSpec spec;
            spec.kind = BackendSpec::Kind::Identity;
            rc.backends[role] = spec;
            continue;
        }
        if (!rc.backends.count(role))
            throw ConfigError("strategy " + pipelines::strategy_name(rc.strategy) +
                              " requires a \"" + role + "\" backend");
    }

    // referenced files must exist up front
    for (const auto& [lang, path] : rc.dataset_paths)
        if (!fs::exists(path)) throw ConfigError("dataset file not found: " + path);
    for (const auto& [role, spec] : rc.backends)
        if (spec.kind == BackendSpec::Kind::Scripted && !fs::exists(spec.script_path))
            throw ConfigError("script file not found: " + spec.script_path);
    if (!rc.template_dir.empty()) {
        for (const char* f :
             {"end_to_end.txt", "codegen.txt", "instructions.txt", "caption.txt", "reasoning.txt"})
            if (!fs::exists(fs::path(rc.template_dir) / f))
                throw ConfigError("template file not found: " +
                                  (fs::path(rc.template_dir) / f).string());
    }
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    KeyedFile kf = KeyedFile::load(path);
    return run_config_from_keyed(kf, fs::path(path).parent_path().string());
}

}  // namespace mvr::config
