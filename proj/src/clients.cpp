#include "mvr/clients.hpp"

#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace mvr::clients {

using nlohmann::json;

MessagePart MessagePart::text(std::string t) { return {Kind::Text, std::move(t)}; }
MessagePart MessagePart::image(std::string ref) { return {Kind::Image, std::move(ref)}; }

Message system_text(std::string text) {
    return {"system", {MessagePart::text(std::move(text))}};
}
Message user_text(std::string text) {
    return {"user", {MessagePart::text(std::move(text))}};
}
Message user_parts(std::vector<MessagePart> parts) { return {"user", std::move(parts)}; }

BackendError::BackendError(Kind k, const std::string& message)
    : std::runtime_error(message), kind(k) {}

std::string canonical_messages_json(const std::vector<Message>& messages) {
    json arr = json::array();
    for (const auto& m : messages) {
        json parts = json::array();
        for (const auto& p : m.parts) {
            parts.push_back({{"kind", p.kind == MessagePart::Kind::Text ? "text" : "image"},
                             {"content", p.content}});
        }
        arr.push_back({{"parts", parts}, {"role", m.role}});
    }
    return arr.dump();
}

std::string message_fingerprint(const std::vector<Message>& messages) {
    // FNV-1a 64, stable across platforms
    std::string canon = canonical_messages_json(messages);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ScriptedBackend::ScriptedBackend(bool strict, std::string default_reply)
    : strict_(strict), default_reply_(std::move(default_reply)) {}

ScriptedBackend::ScriptedBackend(ScriptedBackend&& other) noexcept
    : replies_(std::move(other.replies_)),
      strict_(other.strict_),
      default_reply_(std::move(other.default_reply_)),
      calls_(other.calls_.load()) {}

void ScriptedBackend::add_reply(const std::vector<Message>& messages, const std::string& reply) {
    replies_[message_fingerprint(messages)] = reply;
}

void ScriptedBackend::add_fingerprint(const std::string& fingerprint, const std::string& reply) {
    replies_[fingerprint] = reply;
}

static std::vector<Message> messages_from_json(const json& arr) {
    std::vector<Message> out;
    for (const auto& m : arr) {
        Message msg;
        msg.role = m.at("role").get<std::string>();
        for (const auto& p : m.at("parts")) {
            MessagePart part;
            part.kind = p.at("kind").get<std::string>() == "image" ? MessagePart::Kind::Image
                                                                   : MessagePart::Kind::Text;
            part.content = p.at("content").get<std::string>();
            msg.parts.push_back(std::move(part));
        }
        out.push_back(std::move(msg));
    }
    return out;
}

ScriptedBackend ScriptedBackend::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw BackendError(BackendError::Kind::ScriptError, "cannot open script file " + path);
    ScriptedBackend b;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw BackendError(BackendError::Kind::ScriptError,
                               path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (obj.contains("strict")) {
            b.strict_ = obj.at("strict").get<bool>();
            if (obj.contains("default_reply"))
                b.default_reply_ = obj.at("default_reply").get<std::string>();
            continue;
        }
        std::string fp;
        if (obj.contains("fingerprint"))
            fp = obj.at("fingerprint").get<std::string>();
        else if (obj.contains("messages"))
            fp = message_fingerprint(messages_from_json(obj.at("messages")));
        else
            throw BackendError(BackendError::Kind::ScriptError,
                               path + ":" + std::to_string(line_no) +
                                   ": record needs \"fingerprint\" or \"messages\"");
        b.replies_[fp] = obj.at("reply").get<std::string>();
    }
    return b;
}

void ScriptedBackend::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw BackendError(BackendError::Kind::ScriptError, "cannot write script file " + path);
    json header = {{"strict", strict_}, {"default_reply", default_reply_}};
    out << header.dump() << '\n';
    for (const auto& [fp, reply] : replies_) {
        json obj = {{"fingerprint", fp}, {"reply", reply}};
        out << obj.dump() << '\n';
    }
}

std::string ScriptedBackend::chat(const std::vector<Message>& messages) {
    calls_.fetch_add(1);
    std::string fp = message_fingerprint(messages);
    auto it = replies_.find(fp);
    if (it != replies_.end()) return it->second;
    if (strict_)
        throw BackendError(BackendError::Kind::UnknownFingerprint,
                           "no scripted reply for fingerprint " + fp);
    return default_reply_;
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= bytes.size()) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += alphabet[v & 63];
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

static std::string guess_mime(const std::string& ref) {
    auto dot = ref.rfind('.');
    std::string ext = dot == std::string::npos ? "" : ref.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "png") return "image/png";
    if (ext == "gif") return "image/gif";
    if (ext == "webp") return "image/webp";
    return "image/jpeg";
}

std::string resolve_image_for_wire(const std::string& ref) {
    if (ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 ||
        ref.rfind("data:", 0) == 0)
        return ref;
    std::ifstream in(ref, std::ios::binary);
    if (!in)
        throw BackendError(BackendError::Kind::Transport, "cannot read image file " + ref);
    std::ostringstream buf;
    buf << in.rdbuf();
    return "data:" + guess_mime(ref) + ";base64," + base64_encode(buf.str());
}

std::string build_chat_request_body(const BackendConfig& cfg,
                                    const std::vector<Message>& messages) {
    json body;
    body["model"] = cfg.model_name;
    body["temperature"] = cfg.temperature;
    body["max_tokens"] = cfg.max_tokens;
    json msgs = json::array();
    for (const auto& m : messages) {
        json content = json::array();
        for (const auto& p : m.parts) {
            if (p.kind == MessagePart::Kind::Text)
                content.push_back({{"type", "text"}, {"text", p.content}});
            else
                content.push_back({{"type", "image_url"},
                                   {"image_url", {{"url", resolve_image_for_wire(p.content)}}}});
        }
        msgs.push_back({{"role", m.role}, {"content", content}});
    }
    body["messages"] = msgs;
    return body.dump();
}

std::string parse_chat_response_body(const std::string& body) {
    json obj;
    try {
        obj = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendError(BackendError::Kind::BadResponseShape,
                           std::string("response is not JSON: ") + e.what());
    }
    if (!obj.contains("choices") || !obj["choices"].is_array() || obj["choices"].empty())
        throw BackendError(BackendError::Kind::BadResponseShape, "response has no choices");
    const json& msg = obj["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content") ||
        !msg["message"]["content"].is_string())
        throw BackendError(BackendError::Kind::BadResponseShape,
                           "choices[0].message.content missing");
    return msg["message"]["content"].get<std::string>();
}

namespace {

class HttplibTransport : public ChatTransport {
public:
    HttpResponse post(const std::string& base_url, const std::string& path,
                      const std::string& body, const std::string& bearer,
                      double timeout_s) override {
        // split base_url into scheme://host[:port] and a path prefix
        std::string host = base_url;
        std::string prefix;
        auto scheme_end = host.find("://");
        auto path_start = host.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
        if (path_start != std::string::npos) {
            prefix = host.substr(path_start);
            host = host.substr(0, path_start);
            while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
        httplib::Client cli(host);
        cli.set_read_timeout(std::chrono::milliseconds(static_cast<int>(timeout_s * 1000)));
        cli.set_connection_timeout(std::chrono::milliseconds(static_cast<int>(timeout_s * 1000)));
        httplib::Headers headers;
        if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
        auto res = cli.Post(prefix + path, headers, body, "application/json");
        if (!res) return {0, httplib::to_string(res.error())};
        return {res->status, res->body};
    }
};

}  // namespace

std::shared_ptr<ChatTransport> make_httplib_transport() {
    return std::make_shared<HttplibTransport>();
}

HttpChatBackend::HttpChatBackend(BackendConfig cfg, std::shared_ptr<ChatTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
    if (!transport_) transport_ = make_httplib_transport();
    sleep_fn = [](double seconds) {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };
}

std::string HttpChatBackend::chat(const std::vector<Message>& messages) {
    std::string body = build_chat_request_body(cfg_, messages);
    std::string last_error;
    static thread_local std::mt19937 rng{std::random_device{}()};
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            // 1s base, x2 per attempt, full jitter
            double cap = 1.0 * static_cast<double>(1 << (attempt - 1));
            sleep_fn(std::uniform_real_distribution<double>(0.0, cap)(rng));
        }
        HttpResponse res;
        try {
            res = transport_->post(cfg_.base_url, "/chat/completions", body, cfg_.credential,
                                   cfg_.timeout_s);
        } catch (const std::exception& e) {
            last_error = e.what();
            continue;
        }
        if (res.status == 401 || res.status == 403)
            throw BackendError(BackendError::Kind::Auth,
                               "authentication failed (HTTP " + std::to_string(res.status) + ")");
        if (res.status == 200) return parse_chat_response_body(res.body);
        last_error = res.status == 0 ? "transport: " + res.body
                                     : "HTTP " + std::to_string(res.status);
        if (res.status != 0 && res.status != 429 && res.status < 500)
            throw BackendError(BackendError::Kind::Transport, last_error);
    }
    throw BackendError(BackendError::Kind::Transport,
                       "request failed after " + std::to_string(cfg_.max_retries + 1) +
                           " attempts: " + last_error);
}

bool extract_label(const std::string& reply) {
    std::string token;
    auto check = [&token](bool* out) {
        if (token == "true" || token == "yes") {
            *out = true;
            return true;
        }
        if (token == "false" || token == "no") {
            *out = false;
            return true;
        }
        return false;
    };
    bool verdict = false;
    for (size_t i = 0; i <= reply.size(); ++i) {
        char c = i < reply.size() ? reply[i] : ' ';
        if (std::isalnum(static_cast<unsigned char>(c))) {
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!token.empty()) {
            if (check(&verdict)) return verdict;
            token.clear();
        }
    }
    throw BackendError(BackendError::Kind::UnparsableAnswer,
                       "no verdict token in reply: " + reply.substr(0, 120));
}

std::string credential_from_env(const std::string& backend_name) {
    std::string upper;
    for (char c : backend_name)
        upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(("MVREASON_API_KEY_" + upper).c_str())) return v;
    if (const char* v = std::getenv("MVREASON_API_KEY")) return v;
    return "";
}

std::string Translator::translate(const std::string& text, const std::string& source_language,
                                  const std::string& target_language) {
    if (source_language == target_language) return text;
    calls_.fetch_add(1);
    return do_translate(text, source_language, target_language);
}

std::string IdentityTranslator::do_translate(const std::string& text, const std::string&,
                                             const std::string&) {
    return text;
}

const std::string& language_name(const std::string& code) {
    static const std::map<std::string, std::string> names = {
        {"en", "English"},   {"id", "Indonesian"}, {"sw", "Swahili"},
        {"ta", "Tamil"},     {"tr", "Turkish"},    {"zh", "Mandarin Chinese"},
    };
    auto it = names.find(code);
    if (it != names.end()) return it->second;
    static const std::string unknown = "the source language";
    return unknown;
}

ChatTranslator::ChatTranslator(ChatBackend& backend) : backend_(&backend) {}

std::vector<Message> ChatTranslator::prompt_for(const std::string& text,
                                                const std::string& source_language,
                                                const std::string& target_language) {
    return {system_text("You are a translation engine. Reply with only the translation, "
                        "nothing else."),
            user_text("Translate the following text from " + language_name(source_language) +
                      " to " + language_name(target_language) + ":\n" + text)};
}

std::string ChatTranslator::do_translate(const std::string& text,
                                         const std::string& source_language,
                                         const std::string& target_language) {
    for (const auto& code : {source_language, target_language})
        if (language_name(code) == "the source language")
            throw BackendError(BackendError::Kind::UnsupportedLanguage,
                               "unsupported language code \"" + code + "\"");
    return backend_->chat(prompt_for(text, source_language, target_language));
}

}  // namespace mvr::clients
