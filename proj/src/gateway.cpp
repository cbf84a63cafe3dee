#include <mobileuse/gateway.hpp>
#include <mobileuse/image_codec.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <thread>

namespace mobileuse {

using nlohmann::json;

std::string_view to_string(ChatRole role) noexcept {
    switch (role) {
        case ChatRole::system: return "system";
        case ChatRole::user: return "user";
        case ChatRole::assistant: return "assistant";
    }
    return "user";
}

ChatMessage ChatMessage::system(std::string text) {
    return ChatMessage{ChatRole::system, {ContentPart{std::move(text)}}};
}

ChatMessage ChatMessage::user(std::string text, std::vector<Screenshot> images) {
    ChatMessage m{ChatRole::user, {ContentPart{std::move(text)}}};
    for (auto& img : images) m.parts.emplace_back(ImagePart{std::move(img)});
    return m;
}

std::string ChatRequest::last_user_text() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role != ChatRole::user) continue;
        std::string text;
        for (const auto& part : it->parts) {
            if (const auto* s = std::get_if<std::string>(&part)) text += *s;
        }
        return text;
    }
    return {};
}

std::size_t ChatRequest::image_count() const {
    std::size_t n = 0;
    for (const auto& m : messages) {
        for (const auto& part : m.parts) n += std::holds_alternative<ImagePart>(part) ? 1 : 0;
    }
    return n;
}

std::vector<CompletionToken> make_tokens(const std::string& text, const std::vector<TokenLogprob>& tokens) {
    std::vector<CompletionToken> out;
    out.reserve(tokens.size());
    std::size_t offset = 0;
    for (const auto& t : tokens) {
        if (text.compare(offset, t.text.size(), t.text) != 0) {
            throw Error(Errc::invalid_argument, "token texts do not reconstruct the completion text");
        }
        out.push_back(CompletionToken{t.text, t.logprob, offset});
        offset += t.text.size();
    }
    if (offset != text.size()) {
        throw Error(Errc::invalid_argument, "token texts cover only part of the completion text");
    }
    return out;
}

// ============================================================================
// ScriptedGateway
// ============================================================================

ScriptedGateway::ScriptedGateway(std::vector<ScriptEntry> script, Options options)
    : entries_(std::move(script)), consumed_(entries_.size(), false), options_(std::move(options)) {
    for (const auto& e : entries_) {
        if (e.tokens) make_tokens(e.reply, *e.tokens);
    }
}

std::unique_ptr<ScriptedGateway> scripted_load(std::vector<ScriptEntry> script, ScriptedGateway::Options options) {
    return std::make_unique<ScriptedGateway>(std::move(script), std::move(options));
}

std::vector<ScriptEntry> ScriptedGateway::parse_script(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse_error, std::string("script: ") + e.what());
    }
    if (!j.is_array()) throw Error(Errc::parse_error, "script must be a JSON array");
    std::vector<ScriptEntry> entries;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("reply") || !item["reply"].is_string()) {
            throw Error(Errc::parse_error, "script entry needs a string 'reply'");
        }
        ScriptEntry e;
        e.reply = item["reply"].get<std::string>();
        if (item.contains("match")) e.matcher = item["match"].get<std::string>();
        if (item.contains("tokens")) {
            std::vector<TokenLogprob> tokens;
            for (const auto& t : item["tokens"]) {
                if (!t.is_array() || t.size() != 2) throw Error(Errc::parse_error, "token must be [text, logprob]");
                tokens.push_back(TokenLogprob{t[0].get<std::string>(), t[1].get<double>()});
            }
            make_tokens(e.reply, tokens);
            e.tokens = std::move(tokens);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ScriptEntry> ScriptedGateway::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::invalid_argument, "cannot open script " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_script(buf.str());
}

Completion ScriptedGateway::complete(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    if (request.want_logprobs && !options_.supports_logprobs) {
        throw Error(Errc::logprobs_unavailable, "scripted backend configured without logprob support");
    }
    calls_.push_back(request);
    const std::string last_user = request.last_user_text();
    bool any_left = false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (consumed_[i]) continue;
        any_left = true;
        const auto& e = entries_[i];
        if (!e.matcher.empty() && last_user.find(e.matcher) == std::string::npos) continue;
        consumed_[i] = true;
        Completion c;
        c.text = e.reply;
        c.model_id = options_.model_id;
        if (request.want_logprobs && e.tokens) c.tokens = make_tokens(e.reply, *e.tokens);
        c.usage.completion_tokens = static_cast<int>(e.tokens ? e.tokens->size() : 0);
        return c;
    }
    if (!any_left) throw Error(Errc::script_exhausted, "script exhausted");
    throw Error(Errc::script_mismatch, "no remaining script entry matches request for " + request.agent_role);
}

std::size_t ScriptedGateway::remaining() const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

std::vector<ChatRequest> ScriptedGateway::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

// ============================================================================
// OpenAiGateway
// ============================================================================

OpenAiGateway::OpenAiGateway(GatewayConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    if (config_.base_url.empty()) throw Error(Errc::invalid_argument, "MODEL_BASE_URL is not set");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::invalid_argument, "base URL needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    host_ = config_.base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string OpenAiGateway::build_body(const ChatRequest& request) const {
    json messages = json::array();
    for (const auto& m : request.messages) {
        json content = json::array();
        for (const auto& part : m.parts) {
            if (const auto* text = std::get_if<std::string>(&part)) {
                content.push_back({{"type", "text"}, {"text", *text}});
            } else {
                const auto& img = std::get<ImagePart>(part);
                const auto png = encode_png(img.image);
                content.push_back({{"type", "image_url"},
                                   {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(png)}}}});
            }
        }
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", std::move(content)}});
    }
    json body = {
        {"model", config_.model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    if (request.want_logprobs) body["logprobs"] = true;
    return body.dump();
}

Completion OpenAiGateway::parse_response(const std::string& body, bool want_logprobs) const {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::transport_failure, std::string("malformed provider response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        throw Error(Errc::transport_failure, "provider response has no choices");
    }
    const auto& choice = j["choices"][0];
    Completion c;
    c.model_id = j.value("model", config_.model);
    const auto& content = choice.at("message").at("content");
    c.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (j.contains("usage") && j["usage"].is_object()) {
        c.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        c.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    if (want_logprobs) {
        const json* lp = nullptr;
        if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
            choice["logprobs"]["content"].is_array()) {
            lp = &choice["logprobs"]["content"];
        }
        if (!lp || lp->empty()) {
            throw Error(Errc::logprobs_unavailable, "provider returned no token logprobs");
        }
        std::size_t offset = 0;
        for (const auto& t : *lp) {
            CompletionToken tok;
            if (t.contains("bytes") && t["bytes"].is_array()) {
                for (const auto& b : t["bytes"]) tok.text.push_back(static_cast<char>(b.get<int>()));
            } else {
                tok.text = t.value("token", "");
            }
            tok.logprob = std::min(0.0, t.value("logprob", 0.0));
            tok.byte_offset = offset;
            offset += tok.text.size();
            c.tokens.push_back(std::move(tok));
        }
    }
    return c;
}

Completion OpenAiGateway::complete(const ChatRequest& request) {
    {
        std::lock_guard lock(mutex_);
        if (request.want_logprobs && provider_lacks_logprobs_) {
            throw Error(Errc::logprobs_unavailable, "provider does not return token logprobs");
        }
    }
    const std::string body = build_body(request);
    httplib::Client client(host_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto backoff = config_.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            sleeper_(backoff);
            backoff *= 2;
        }
        {
            std::lock_guard lock(mutex_);
            ++attempts_;
        }
        auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        const int status = res->status;
        if (status == 200) {
            try {
                return parse_response(res->body, request.want_logprobs);
            } catch (const Error& e) {
                if (e.code() == Errc::logprobs_unavailable) {
                    std::lock_guard lock(mutex_);
                    provider_lacks_logprobs_ = true;
                }
                throw;
            }
        }
        if (status == 408 || status == 429 || status >= 500) {
            last_error = "HTTP " + std::to_string(status);
            continue;
        }
        if (request.want_logprobs && status == 400 && res->body.find("logprob") != std::string::npos) {
            std::lock_guard lock(mutex_);
            provider_lacks_logprobs_ = true;
            throw Error(Errc::logprobs_unavailable, "provider rejected the logprobs option: " + res->body);
        }
        throw Error(Errc::provider_rejected, "HTTP " + std::to_string(status) + ": " + res->body);
    }
    throw Error(Errc::transport_failure,
                last_error + " after " + std::to_string(config_.max_retries + 1) + " attempts");
}

}  // namespace mobileuse
