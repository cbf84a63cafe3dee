#include <mobileuse/agents.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/reflection_gate.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace mobileuse {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct Line {
    std::size_t offset;
    std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back({pos, line});
        if (nl == text.size()) break;
        pos = nl + 1;
    }
    return lines;
}

// Offset just past "Tag:" when the line starts with that tag, ignoring case
// and leading markdown decoration; npos otherwise.
std::size_t tag_end(std::string_view line, std::string_view tag) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*' || line[i] == '#')) ++i;
    if (line.size() - i < tag.size()) return std::string_view::npos;
    for (std::size_t k = 0; k < tag.size(); ++k) {
        if (std::tolower(static_cast<unsigned char>(line[i + k])) != tag[k]) return std::string_view::npos;
    }
    i += tag.size();
    while (i < line.size() && line[i] == '*') ++i;
    if (i >= line.size() || line[i] != ':') return std::string_view::npos;
    ++i;
    while (i < line.size() && line[i] == '*') ++i;
    return i;
}

std::string verdict_word(Verdict v) {
    switch (v) {
        case Verdict::ok: return "OK";
        case Verdict::error: return "ERROR";
        case Verdict::incomplete: return "INCOMPLETE";
    }
    return "OK";
}

std::string render_one_feedback(const ReflectionFeedback& f) {
    std::string out = "[" + std::string(to_string(f.level)) + "] " + verdict_word(f.verdict);
    if (!f.explanation.empty()) out += ": " + f.explanation;
    if (f.suggestion && !f.suggestion->empty()) out += "\n  Suggestion: " + *f.suggestion;
    return out;
}

std::string step_line(const StepRecord& step) {
    const auto& out = step.action_output;
    std::string desc = out.description.empty() ? describe_action(out.action) : out.description;
    return "Step " + std::to_string(step.index) + ": " + desc + " " + render_action(out.action);
}

std::vector<Screenshot> cap_images(std::vector<Screenshot> images, int max_images) {
    if (max_images >= 0 && static_cast<int>(images.size()) > max_images) {
        images.erase(images.begin(), images.end() - max_images);
    }
    return images;
}

}  // namespace

FeedbackBundle FeedbackBundle::from_step(const StepRecord& step) {
    FeedbackBundle b;
    if (auto* f = step.reflection(ReflectionLevel::action)) b.action = *f;
    if (auto* f = step.reflection(ReflectionLevel::trajectory)) b.trajectory = *f;
    if (auto* f = step.reflection(ReflectionLevel::global)) b.global = *f;
    return b;
}

std::string render_feedback(const FeedbackBundle& feedback) {
    if (feedback.empty()) return "(none)";
    std::string out;
    for (const auto* f : {&feedback.action, &feedback.trajectory, &feedback.global}) {
        if (!*f) continue;
        if (!out.empty()) out += '\n';
        out += render_one_feedback(**f);
    }
    return out;
}

std::string render_progress(const Progress& progress) {
    std::string out = progress.summary.empty() ? "(nothing yet)" : progress.summary;
    if (!progress.noted_facts.empty()) {
        out += "\nNoted facts:";
        for (const auto& n : progress.noted_facts) out += "\n- " + n;
    }
    if (progress.answer) out += "\nAnswer given: " + *progress.answer;
    return out;
}

std::string render_knowledge(const std::vector<KnowledgeItem>& items) {
    if (items.empty()) return "(none)";
    std::string out;
    for (const auto& k : items) {
        if (!out.empty()) out += '\n';
        out += "- [" + k.app + "] " + k.text;
    }
    return out;
}

std::string render_history(std::span<const StepRecord> steps, int max_actions, bool with_reflections) {
    if (steps.empty()) return "(none)";
    std::size_t first = 0;
    std::string out;
    if (max_actions >= 0 && steps.size() > static_cast<std::size_t>(max_actions)) {
        first = steps.size() - static_cast<std::size_t>(max_actions);
        out = "(" + std::to_string(first) + " earlier steps omitted)";
    }
    for (std::size_t i = first; i < steps.size(); ++i) {
        if (!out.empty()) out += '\n';
        out += step_line(steps[i]);
        if (!with_reflections) continue;
        for (const auto& f : steps[i].reflections) out += "\n  " + render_one_feedback(f);
    }
    return out;
}

ParsedOperatorReply parse_operator_reply(std::string_view text) {
    const auto lines = split_lines(text);
    std::optional<std::size_t> thought_line, action_line, desc_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!thought_line && !action_line && tag_end(lines[i].text, "thought") != std::string_view::npos) {
            thought_line = i;
        } else if (!action_line && tag_end(lines[i].text, "action") != std::string_view::npos) {
            action_line = i;
        } else if (action_line && !desc_line && tag_end(lines[i].text, "description") != std::string_view::npos) {
            desc_line = i;
        }
    }
    if (!thought_line) throw Error(Errc::parse_error, "missing Thought: line");
    if (!action_line) throw Error(Errc::parse_error, "missing Action: line");
    if (!desc_line) throw Error(Errc::parse_error, "missing Description: line");

    ParsedOperatorReply parsed;
    const auto& tl = lines[*thought_line];
    std::string thought(tl.text.substr(tag_end(tl.text, "thought")));
    for (std::size_t i = *thought_line + 1; i < *action_line; ++i) thought += "\n" + std::string(lines[i].text);
    parsed.output.thought = trim(thought);

    // The JSON object sits on the Action line, or on the next non-empty line.
    std::size_t json_line = *action_line;
    std::size_t start = tag_end(lines[json_line].text, "action");
    auto rest = lines[json_line].text.substr(start);
    if (trim(rest).empty() && json_line + 1 < *desc_line) {
        ++json_line;
        while (json_line < *desc_line && trim(lines[json_line].text).empty()) ++json_line;
        start = 0;
        rest = lines[json_line].text;
    }
    const auto brace = rest.find('{');
    const auto close = rest.rfind('}');
    if (brace == std::string_view::npos || close == std::string_view::npos || close < brace) {
        throw Error(Errc::parse_error, "Action: line holds no JSON object");
    }
    const auto json = rest.substr(brace, close - brace + 1);
    parsed.output.action = parse_action(json);
    const auto span = find_action_type_span(json);
    if (!span) throw Error(Errc::parse_error, "action_type not found");
    const std::size_t base = lines[json_line].offset + start + brace;
    parsed.action_type_span = ByteSpan{base + span->begin, base + span->end};

    const auto& dl = lines[*desc_line];
    std::string desc(dl.text.substr(tag_end(dl.text, "description")));
    for (std::size_t i = *desc_line + 1; i < lines.size(); ++i) desc += "\n" + std::string(lines[i].text);
    parsed.output.description = trim(desc);
    if (parsed.output.description.empty()) throw Error(Errc::parse_error, "empty Description");
    return parsed;
}

std::optional<ReflectionFeedback> parse_reflection_reply(std::string_view text, ReflectionLevel level,
                                                         int step_index) {
    const auto lines = split_lines(text);
    std::optional<std::size_t> verdict_line, suggestion_line;
    std::string word;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!verdict_line) {
            const auto end = tag_end(lines[i].text, "verdict");
            if (end != std::string_view::npos) {
                verdict_line = i;
                auto w = trim(lines[i].text.substr(end));
                std::string up;
                for (char c : w) {
                    if (!std::isalpha(static_cast<unsigned char>(c))) break;
                    up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                }
                word = up;
            }
        } else if (!suggestion_line && tag_end(lines[i].text, "suggestion") != std::string_view::npos) {
            suggestion_line = i;
        }
    }
    if (!verdict_line) return std::nullopt;

    Verdict verdict;
    if (word == "OK") {
        verdict = Verdict::ok;
    } else if (word == "ERROR" || word == "INCOMPLETE") {
        verdict = level == ReflectionLevel::global ? Verdict::incomplete : Verdict::error;
    } else {
        return std::nullopt;
    }

    ReflectionFeedback f;
    f.level = level;
    f.verdict = verdict;
    f.step_index = step_index;
    std::string explanation;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == *verdict_line || (suggestion_line && i >= *suggestion_line)) continue;
        if (!explanation.empty()) explanation += '\n';
        explanation += lines[i].text;
    }
    f.explanation = trim(explanation);
    if (suggestion_line && verdict != Verdict::ok) {
        const auto& sl = lines[*suggestion_line];
        std::string s(sl.text.substr(tag_end(sl.text, "suggestion")));
        for (std::size_t i = *suggestion_line + 1; i < lines.size(); ++i) s += "\n" + std::string(lines[i].text);
        s = trim(s);
        if (!s.empty()) f.suggestion = s;
    }
    if (verdict != Verdict::ok && f.explanation.empty()) {
        f.explanation = f.suggestion ? *f.suggestion : "No explanation given.";
    }
    return f;
}

std::vector<KnowledgeItem> parse_summary_reply(std::string_view text, const std::string& app, bool* parsed) {
    std::vector<KnowledgeItem> items;
    const auto t = trim(text);
    std::string upper;
    for (char c : t) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "NONE" || upper == "NONE.") {
        if (parsed) *parsed = true;
        return items;
    }
    for (const auto& line : split_lines(text)) {
        auto s = trim(line.text);
        if (s.size() < 2 || !(s[0] == '-' || s[0] == '*') || s[1] != ' ') continue;
        KnowledgeItem item;
        item.app = app;
        std::string body = trim(std::string_view(s).substr(2));
        // Optional trailing "[tags: a, b]".
        const auto tags_at = body.rfind("[tags:");
        if (tags_at != std::string::npos && body.back() == ']') {
            std::stringstream ss(body.substr(tags_at + 6, body.size() - tags_at - 7));
            std::string tag;
            while (std::getline(ss, tag, ',')) {
                tag = trim(tag);
                if (!tag.empty()) item.tags.push_back(tag);
            }
            body = trim(std::string_view(body).substr(0, tags_at));
        }
        if (body.empty()) continue;
        item.text = body;
        items.push_back(std::move(item));
    }
    if (parsed) *parsed = !items.empty();
    return items;
}

Agents::Agents(ModelGateway& gateway, std::shared_ptr<const TemplateCatalog> templates, AgentLimits limits,
               WarningSink warn)
    : gateway_(gateway),
      templates_(templates ? std::move(templates) : std::make_shared<const TemplateCatalog>()),
      limits_(limits),
      warn_(std::move(warn)) {}

void Agents::warn(const std::string& message) const {
    if (warn_) warn_(message);
}

ChatRequest Agents::make_request(AgentRole role, const std::map<std::string, std::string>& slots,
                                 std::vector<Screenshot> images, int max_images) const {
    const auto& tmpl = templates_->get(role);
    ChatRequest req;
    req.agent_role = std::string(to_string(role));
    req.messages.push_back(ChatMessage::system(tmpl.system_text));
    req.messages.push_back(ChatMessage::user(tmpl.render_user(slots), cap_images(std::move(images), max_images)));
    return req;
}

OperatorResult Agents::run_operator(const OperatorInput& input) {
    const bool explorer = input.persona == AgentRole::explorer;
    std::map<std::string, std::string> slots{
        {"instruction", input.instruction},
        {"progress", render_progress(input.progress)},
        {"history", render_history(input.history, limits_.max_history_actions, true)},
        {"feedback", render_feedback(input.feedback)},
        {"images", "The current screenshot is attached."},
    };
    if (explorer) {
        slots["guidance"] = input.guidance.empty() ? "(none)" : input.guidance;
    } else {
        slots["knowledge"] = render_knowledge(input.knowledge);
    }
    auto request = make_request(explorer ? AgentRole::explorer : AgentRole::operator_agent, slots,
                                {input.screenshot}, limits_.max_images_per_call);

    auto call = [&](ChatRequest& req) {
        req.want_logprobs = logprobs_supported_.load();
        if (!req.want_logprobs) return gateway_.complete(req);
        try {
            return gateway_.complete(req);
        } catch (const Error& e) {
            if (e.code() != Errc::logprobs_unavailable) throw;
            logprobs_supported_ = false;
            warn("model does not return logprobs; action reflection will run every step");
            req.want_logprobs = false;
            return gateway_.complete(req);
        }
    };

    OperatorResult result;
    for (int attempt = 1; attempt <= 2; ++attempt) {
        const Completion completion = call(request);
        try {
            auto parsed = parse_operator_reply(completion.text);
            result.output = std::move(parsed.output);
            result.raw_reply = completion.text;
            result.attempts = attempt;
            if (request.want_logprobs) {
                try {
                    result.confidence = compute_confidence(completion, parsed.action_type_span);
                } catch (const Error& e) {
                    warn(std::string("confidence unavailable: ") + e.what());
                }
            }
            return result;
        } catch (const Error& e) {
            if (attempt == 2) {
                throw Error(Errc::unparseable_after_retry, std::string("operator reply unparseable: ") + e.what());
            }
            warn(std::string("operator reply unparseable, retrying: ") + e.what());
            ChatMessage assistant;
            assistant.role = ChatRole::assistant;
            assistant.parts.emplace_back(completion.text);
            request.messages.push_back(std::move(assistant));
            request.messages.push_back(ChatMessage::user(
                std::string("Your reply could not be parsed (") + e.what() +
                "). Answer again with exactly three lines:\nThought: <reasoning>\n"
                "Action: <one action JSON object>\nDescription: <one sentence>"));
        }
    }
    throw Error(Errc::unparseable_after_retry, "operator reply unparseable");
}

Progress Agents::run_progressor(const std::string& instruction, std::span<const StepRecord> history,
                                const Progress& previous, const ActionOutput& latest,
                                const FeedbackBundle& feedback) {
    Progress next = previous;
    if (latest.action.type == ActionType::take_note && latest.action.text) {
        next.noted_facts.push_back(*latest.action.text);
    }
    if (latest.action.type == ActionType::answer && latest.action.text) next.answer = *latest.action.text;

    std::string desc = latest.description.empty() ? describe_action(latest.action) : latest.description;
    const std::map<std::string, std::string> slots{
        {"instruction", instruction},
        {"progress", render_progress(previous)},
        {"history", render_history(history, limits_.max_history_actions, false)},
        {"action", desc + " " + render_action(latest.action)},
        {"feedback", render_feedback(feedback)},
    };
    const auto completion = gateway_.complete(make_request(AgentRole::progressor, slots, {}, 0));
    const auto lines = split_lines(completion.text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto end = tag_end(lines[i].text, "progress");
        if (end == std::string_view::npos) continue;
        std::string s(lines[i].text.substr(end));
        for (std::size_t k = i + 1; k < lines.size(); ++k) s += "\n" + std::string(lines[k].text);
        s = trim(s);
        if (!s.empty()) {
            next.summary = s;
            return next;
        }
    }
    const auto raw = trim(completion.text);
    warn("progressor reply has no Progress: line; using the raw reply");
    if (!raw.empty()) next.summary = raw;
    return next;
}

ReflectionFeedback Agents::reflect(AgentRole role, ReflectionLevel level, ChatRequest request, int step_index) {
    const auto completion = gateway_.complete(request);
    if (auto f = parse_reflection_reply(completion.text, level, step_index)) return *f;
    warn(std::string(to_string(role)) + " reply has no usable VERDICT line; treating as OK");
    ReflectionFeedback f;
    f.level = level;
    f.verdict = Verdict::ok;
    f.step_index = step_index;
    return f;
}

ReflectionFeedback Agents::run_action_reflector(const std::string& instruction, const Screenshot& before,
                                                const Screenshot& annotated_after, const ActionOutput& action,
                                                int step_index) {
    std::string desc = action.description.empty() ? describe_action(action.action) : action.description;
    const std::map<std::string, std::string> slots{
        {"instruction", instruction},
        {"action", desc + " " + render_action(action.action)},
        {"images", "Two screenshots are attached: before the action, then after it with changed regions "
                   "outlined in red."},
    };
    return reflect(AgentRole::action_reflector, ReflectionLevel::action,
                   make_request(AgentRole::action_reflector, slots, {before, annotated_after},
                                limits_.max_images_per_call),
                   step_index);
}

ReflectionFeedback Agents::run_trajectory_reflector(const std::string& instruction, const Progress& previous,
                                                    std::span<const StepRecord> window, int step_index) {
    std::string history;
    for (const auto& step : window) {
        if (!history.empty()) history += '\n';
        history += step_line(step);
        if (const auto* f = step.reflection(ReflectionLevel::action)) {
            history += "\n  " + render_one_feedback(*f);
        } else {
            history += "\n  (no action-level feedback)";
        }
    }
    if (history.empty()) history = "(none)";
    const std::map<std::string, std::string> slots{
        {"instruction", instruction},
        {"progress", render_progress(previous)},
        {"history", history},
    };
    return reflect(AgentRole::trajectory_reflector, ReflectionLevel::trajectory,
                   make_request(AgentRole::trajectory_reflector, slots, {}, 0), step_index);
}

ReflectionFeedback Agents::run_global_reflector(const std::string& instruction, std::span<const StepRecord> history,
                                                const std::vector<Screenshot>& screens, int step_index) {
    const std::map<std::string, std::string> slots{
        {"instruction", instruction},
        {"history", render_history(history, limits_.max_history_actions, true)},
        {"images", "The most recent screenshots are attached, oldest first."},
    };
    return reflect(AgentRole::global_reflector, ReflectionLevel::global,
                   make_request(AgentRole::global_reflector, slots, screens, limits_.global_max_images),
                   step_index);
}

std::vector<KnowledgeItem> Agents::run_summary_agent(const std::string& app, std::span<const StepRecord> segment,
                                                     const KnowledgeSource& source) {
    if (segment.size() < 2) throw Error(Errc::invalid_argument, "summary segment needs at least 2 steps");
    const auto& last = segment.back();
    const Screenshot& final_screen = last.screenshot_after ? *last.screenshot_after : last.screenshot_before;
    const std::map<std::string, std::string> slots{
        {"app", app},
        {"history", render_history(segment, limits_.max_history_actions, false)},
        {"images", "The first and last screenshots of the segment are attached."},
    };
    const auto completion = gateway_.complete(make_request(
        AgentRole::summary, slots, {segment.front().screenshot_before, final_screen}, limits_.max_images_per_call));
    bool parsed = false;
    auto items = parse_summary_reply(completion.text, app, &parsed);
    if (!parsed) warn("summary reply has no knowledge items");
    for (auto& item : items) item.source = source;
    return items;
}

std::string Agents::run_critic_agent(const std::string& app, const Screenshot& screen,
                                     const std::vector<KnowledgeItem>& knowledge) {
    const std::map<std::string, std::string> slots{
        {"app", app},
        {"knowledge", render_knowledge(knowledge)},
        {"images", "The current screenshot is attached."},
    };
    const auto completion =
        gateway_.complete(make_request(AgentRole::critic, slots, {screen}, limits_.max_images_per_call));
    const auto text = trim(completion.text);
    const auto end = tag_end(text, "guidance");
    return end == std::string_view::npos ? text : trim(std::string_view(text).substr(end));
}

}  // namespace mobileuse
