#pragma once

// Chat-completion gateway: text + images in, text + per-token logprobs out.
//
// Two backends share the ModelGateway interface:
//   - OpenAiGateway talks to any OpenAI-compatible /chat/completions server.
//   - ScriptedGateway replays a fixed list of replies (tests, demos, bench).

#include <mobileuse/types.hpp>

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

namespace mobileuse {

enum class ChatRole { system, user, assistant };
std::string_view to_string(ChatRole role) noexcept;

struct ImagePart {
    Screenshot image;
    std::string media_type = "image/png";
};

using ContentPart = std::variant<std::string, ImagePart>;

struct ChatMessage {
    ChatRole role = ChatRole::user;
    std::vector<ContentPart> parts;

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text, std::vector<Screenshot> images = {});
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    bool want_logprobs = false;
    int max_tokens = 1024;
    // Which agent issued the call ("operator", "action_reflector", ...).
    // Never sent over the wire.
    std::string agent_role;

    // Concatenated text of the last user message; empty if none.
    std::string last_user_text() const;
    std::size_t image_count() const;
};

struct CompletionToken {
    std::string text;
    double logprob = 0.0;
    std::size_t byte_offset = 0;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct Completion {
    std::string text;
    std::vector<CompletionToken> tokens;  // empty unless logprobs were requested
    std::string model_id;
    Usage usage;
};

// Builds tokens with byte offsets. Throws Error{invalid_argument} if the
// token texts do not concatenate to `text`.
std::vector<CompletionToken> make_tokens(const std::string& text, const std::vector<TokenLogprob>& tokens);

class ModelGateway {
public:
    virtual ~ModelGateway() = default;

    // Errors: transport_failure, provider_rejected, logprobs_unavailable,
    // and for the scripted backend script_exhausted / script_mismatch.
    virtual Completion complete(const ChatRequest& request) = 0;
};

// ============================================================================
// Scripted backend
// ============================================================================

struct ScriptEntry {
    std::string matcher;  // substring of the last user text; empty matches anything
    std::string reply;
    std::optional<std::vector<TokenLogprob>> tokens;
};

class ScriptedGateway final : public ModelGateway {
public:
    struct Options {
        bool supports_logprobs = true;
        std::string model_id = "scripted";
    };

    ScriptedGateway(std::vector<ScriptEntry> script, Options options);
    explicit ScriptedGateway(std::vector<ScriptEntry> script) : ScriptedGateway(std::move(script), Options{}) {}

    // Loads a JSON array of {"match"?, "reply", "tokens"?: [[text, logprob], ...]}.
    static std::vector<ScriptEntry> load_file(const std::string& path);
    static std::vector<ScriptEntry> parse_script(const std::string& json_text);

    Completion complete(const ChatRequest& request) override;

    std::size_t remaining() const;
    std::vector<ChatRequest> calls() const;

private:
    mutable std::mutex mutex_;
    std::vector<ScriptEntry> entries_;
    std::vector<bool> consumed_;
    std::vector<ChatRequest> calls_;
    Options options_;
};

// Validates an entry list the same way the constructor does.
std::unique_ptr<ScriptedGateway> scripted_load(std::vector<ScriptEntry> script,
                                               ScriptedGateway::Options options = {});

// ============================================================================
// OpenAI-compatible backend
// ============================================================================

struct GatewayConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000/v1
    std::string api_key;
    std::string model = "qwen2.5-vl-72b-instruct";
    std::chrono::seconds timeout{120};
    int max_retries = 3;  // retries after the first attempt
    std::chrono::milliseconds initial_backoff{1000};
};

class OpenAiGateway final : public ModelGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAiGateway(GatewayConfig config, Sleeper sleeper = {});

    Completion complete(const ChatRequest& request) override;

    // Request body for /chat/completions; exposed for inspection.
    std::string build_body(const ChatRequest& request) const;
    // Parses a successful response body.
    Completion parse_response(const std::string& body, bool want_logprobs) const;

    int attempts_made() const noexcept { return attempts_; }

private:
    GatewayConfig config_;
    Sleeper sleeper_;
    std::string host_;
    std::string path_prefix_;
    int attempts_ = 0;
    bool provider_lacks_logprobs_ = false;
    std::mutex mutex_;
};

}  // namespace mobileuse
