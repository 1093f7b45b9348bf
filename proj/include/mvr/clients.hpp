#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvr::clients {

struct MessagePart {
    enum class Kind { Text, Image };

    Kind kind = Kind::Text;
    std::string content;  // text segment, or image reference

    static MessagePart text(std::string t);
    static MessagePart image(std::string ref);

    bool operator==(const MessagePart&) const = default;
};

struct Message {
    std::string role;  // system | user | assistant
    std::vector<MessagePart> parts;

    bool operator==(const Message&) const = default;
};

Message system_text(std::string text);
Message user_text(std::string text);
Message user_parts(std::vector<MessagePart> parts);

struct BackendConfig {
    std::string name;
    std::string base_url;
    std::string model_name;
    double temperature = 0.0;
    int max_tokens = 512;
    double timeout_s = 60.0;
    int max_retries = 3;
    std::string credential;  // from env, never serialized
};

class BackendError : public std::runtime_error {
public:
    enum class Kind {
        Transport,
        Auth,
        BadResponseShape,
        UnknownFingerprint,
        UnparsableAnswer,
        UnsupportedLanguage,
        ScriptError,
    };

    BackendError(Kind kind, const std::string& message);

    Kind kind;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(const std::vector<Message>& messages) = 0;
};

// Canonical serialized form of a message sequence; the fingerprint is a stable
// 64-bit FNV-1a hash of it, identical across runs and platforms.
std::string canonical_messages_json(const std::vector<Message>& messages);
std::string message_fingerprint(const std::vector<Message>& messages);

// Deterministic test double: fingerprint of the rendered messages -> canned
// reply. Strict mode errors on unknown fingerprints.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(bool strict = true, std::string default_reply = "True");
    ScriptedBackend(ScriptedBackend&& other) noexcept;

    void add_reply(const std::vector<Message>& messages, const std::string& reply);
    void add_fingerprint(const std::string& fingerprint, const std::string& reply);

    // Line-delimited records {fingerprint, reply} or {messages, reply}.
    static ScriptedBackend load(const std::string& path);
    void save(const std::string& path) const;

    std::string chat(const std::vector<Message>& messages) override;

    int calls() const { return calls_.load(); }

private:
    std::map<std::string, std::string> replies_;
    bool strict_;
    std::string default_reply_;
    std::atomic<int> calls_{0};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual HttpResponse post(const std::string& base_url, const std::string& path,
                              const std::string& body, const std::string& bearer,
                              double timeout_s) = 0;
};

std::shared_ptr<ChatTransport> make_httplib_transport();

// Chat-completion wire protocol: POST {base_url}/chat/completions, images sent
// as base64 data-URI parts, reply read from choices[0].message.content.
// Retries transient transport failures with exponential backoff and full
// jitter (1s base, x2 per attempt).
class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(BackendConfig cfg, std::shared_ptr<ChatTransport> transport = nullptr);

    std::string chat(const std::vector<Message>& messages) override;

    // Test hook; default sleeps for real.
    std::function<void(double seconds)> sleep_fn;

private:
    BackendConfig cfg_;
    std::shared_ptr<ChatTransport> transport_;
};

std::string build_chat_request_body(const BackendConfig& cfg,
                                    const std::vector<Message>& messages);
std::string parse_chat_response_body(const std::string& body);

// Resolves an image reference for the wire: http(s) URLs pass through,
// anything else is read from disk and encoded as a base64 data URI.
std::string resolve_image_for_wire(const std::string& ref);
std::string base64_encode(const std::string& bytes);

// Scans for the first standalone verdict token: true/yes -> true,
// false/no -> false. Case-insensitive.
bool extract_label(const std::string& reply);

// Reads MVREASON_API_KEY_<NAME> (name uppercased) then MVREASON_API_KEY.
std::string credential_from_env(const std::string& backend_name);

class Translator {
public:
    virtual ~Translator() = default;

    // Identity when source == target, with no backend call.
    std::string translate(const std::string& text, const std::string& source_language,
                          const std::string& target_language);

    int calls() const { return calls_.load(); }

protected:
    virtual std::string do_translate(const std::string& text, const std::string& source_language,
                                     const std::string& target_language) = 0;

private:
    std::atomic<int> calls_{0};
};

class IdentityTranslator : public Translator {
protected:
    std::string do_translate(const std::string& text, const std::string&,
                             const std::string&) override;
};

// Prompts a chat backend to translate; works with scripted and live backends.
class ChatTranslator : public Translator {
public:
    explicit ChatTranslator(ChatBackend& backend);

    static std::vector<Message> prompt_for(const std::string& text,
                                           const std::string& source_language,
                                           const std::string& target_language);

protected:
    std::string do_translate(const std::string& text, const std::string& source_language,
                             const std::string& target_language) override;

private:
    ChatBackend* backend_;
};

const std::string& language_name(const std::string& code);

}  // namespace mvr::clients
