#include <mobileuse/error.hpp>
#include <mobileuse/events.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace mobileuse {

using nlohmann::json;

std::string shot_path(int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shots/%04d.png", n);
    return buf;
}

json feedback_to_json(const ReflectionFeedback& f) {
    json j{{"level", to_string(f.level)},
           {"verdict", to_string(f.verdict)},
           {"explanation", f.explanation},
           {"step_index", f.step_index}};
    j["suggestion"] = f.suggestion ? json(*f.suggestion) : json(nullptr);
    return j;
}

json progress_to_json(const Progress& p) {
    json j{{"summary", p.summary}, {"noted_facts", p.noted_facts}};
    j["answer"] = p.answer ? json(*p.answer) : json(nullptr);
    return j;
}

json action_output_to_json(const ActionOutput& a) {
    return {{"thought", a.thought},
            {"action", json::parse(render_action(a.action))},
            {"action_text", render_action(a.action)},
            {"description", a.description}};
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json box_json(const BoundingBox& b) { return json::array({b.x, b.y, b.width, b.height}); }

}  // namespace

std::string_view RunEvent::type() const noexcept {
    return std::visit(overloaded{
                          [](const ev::RunStarted&) { return std::string_view("run_started"); },
                          [](const ev::StepStarted&) { return std::string_view("step_started"); },
                          [](const ev::OperatorOutput&) { return std::string_view("operator_output"); },
                          [](const ev::ConfidenceGated&) { return std::string_view("confidence_gated"); },
                          [](const ev::ActionExecuted&) { return std::string_view("action_executed"); },
                          [](const ev::Reflection&) { return std::string_view("reflection"); },
                          [](const ev::TerminateIntercepted&) { return std::string_view("terminate_intercepted"); },
                          [](const ev::ProgressUpdated&) { return std::string_view("progress_updated"); },
                          [](const ev::RunFinished&) { return std::string_view("run_finished"); },
                          [](const ev::Warning&) { return std::string_view("warning"); },
                      },
                      body);
}

json to_json(const RunEvent& event) {
    json j{{"v", kTraceVersion}, {"run_id", event.run_id}, {"seq", event.seq}, {"ts", event.ts},
           {"type", event.type()}};
    std::visit(overloaded{
                   [&](const ev::RunStarted& e) {
                       j["instruction"] = e.instruction;
                       j["app_hint"] = e.app_hint ? json(*e.app_hint) : json(nullptr);
                       j["device"] = {{"width", e.width}, {"height", e.height}, {"id", e.device_id}};
                       j["knowledge_ids"] = e.knowledge_ids;
                       j["config"] = e.config;
                   },
                   [&](const ev::StepStarted& e) {
                       j["step"] = e.step;
                       j["shot"] = e.shot;
                       j["screenshot"] = shot_path(e.shot);
                   },
                   [&](const ev::OperatorOutput& e) {
                       j["step"] = e.step;
                       j["output"] = action_output_to_json(e.output);
                       j["attempts"] = e.attempts;
                       if (e.confidence) {
                           json toks = json::array();
                           for (const auto& t : e.confidence->tokens) toks.push_back(json::array({t.text, t.logprob}));
                           j["confidence"] = {{"value", e.confidence->value}, {"tokens", toks}};
                       } else {
                           j["confidence"] = nullptr;
                       }
                   },
                   [&](const ev::ConfidenceGated& e) {
                       j["step"] = e.step;
                       j["confidence"] = e.confidence ? json(*e.confidence) : json(nullptr);
                       // -inf has no JSON form.
                       j["theta"] = std::isinf(e.theta) ? json("-inf") : json(e.theta);
                       j["reflect"] = e.reflect;
                   },
                   [&](const ev::ActionExecuted& e) {
                       j["step"] = e.step;
                       j["outcome"] = to_string(e.report.outcome);
                       j["detail"] = e.report.detail;
                       j["shot_after"] = e.shot_after;
                       j["screenshot_after"] = shot_path(e.shot_after);
                       json boxes = json::array();
                       for (const auto& b : e.changed_regions) boxes.push_back(box_json(b));
                       j["changed_regions"] = boxes;
                   },
                   [&](const ev::Reflection& e) {
                       j["step"] = e.step;
                       j["feedback"] = feedback_to_json(e.feedback);
                       json trig = json::array();
                       for (auto t : e.triggers) trig.push_back(to_string(t));
                       j["triggers"] = trig;
                   },
                   [&](const ev::TerminateIntercepted& e) {
                       j["step"] = e.step;
                       j["status"] = to_string(e.status);
                       j["verdict"] = to_string(e.verdict);
                       j["accepted"] = e.accepted;
                       j["reflected"] = e.reflected;
                       j["rejections"] = e.rejections;
                   },
                   [&](const ev::ProgressUpdated& e) {
                       j["step"] = e.step;
                       j["progress"] = progress_to_json(e.progress);
                   },
                   [&](const ev::RunFinished& e) {
                       j["status"] = to_string(e.status);
                       j["steps"] = e.steps;
                       j["answer"] = e.answer ? json(*e.answer) : json(nullptr);
                       j["failure_label"] = e.failure_label ? json(to_string(*e.failure_label)) : json(nullptr);
                   },
                   [&](const ev::Warning& e) {
                       j["step"] = e.step ? json(*e.step) : json(nullptr);
                       j["text"] = e.text;
                   },
               },
               event.body);
    return j;
}

std::string validate_event_json(const json& j) {
    if (!j.is_object()) return "event is not an object";
    if (!j.contains("v") || !j["v"].is_number_integer()) return "missing integer field \"v\"";
    if (j["v"].get<int>() != kTraceVersion) return "unsupported version " + j["v"].dump();
    for (const char* key : {"seq", "ts"}) {
        if (!j.contains(key) || !j[key].is_number_integer()) return std::string("missing integer field \"") + key + "\"";
    }
    for (const char* key : {"run_id", "type"}) {
        if (!j.contains(key) || !j[key].is_string()) return std::string("missing string field \"") + key + "\"";
    }
    static const std::map<std::string, std::vector<const char*>> required{
        {"run_started", {"instruction", "device", "config"}},
        {"step_started", {"step", "screenshot"}},
        {"operator_output", {"step", "output", "confidence"}},
        {"confidence_gated", {"step", "reflect", "theta"}},
        {"action_executed", {"step", "outcome", "screenshot_after"}},
        {"reflection", {"step", "feedback"}},
        {"terminate_intercepted", {"step", "verdict", "accepted"}},
        {"progress_updated", {"step", "progress"}},
        {"run_finished", {"status", "steps"}},
        {"warning", {"text"}},
    };
    const auto type = j["type"].get<std::string>();
    const auto it = required.find(type);
    if (it == required.end()) return "unknown event type \"" + type + "\"";
    for (const char* key : it->second) {
        if (!j.contains(key)) return "event \"" + type + "\" lacks field \"" + key + "\"";
    }
    if (type == "operator_output") {
        const auto& out = j["output"];
        if (!out.is_object() || !out.contains("action_text") || !out["action_text"].is_string()) {
            return "operator_output lacks output.action_text";
        }
    }
    return {};
}

std::vector<json> load_trace(const std::string& path) {
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(file)) file /= "events.jsonl";
    std::ifstream in(file);
    if (!in) throw Error(Errc::invalid_argument, "cannot read trace " + file.string());
    std::vector<json> events;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& why) {
        throw Error(Errc::schema_error, file.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            fail("not a complete JSON object");
        }
        if (auto why = validate_event_json(j); !why.empty()) fail(why);
        if (j["seq"].get<std::int64_t>() != static_cast<std::int64_t>(events.size())) {
            fail("expected seq " + std::to_string(events.size()) + ", got " + j["seq"].dump());
        }
        if (!events.empty() && events.back()["type"] == "run_finished") fail("event after run_finished");
        events.push_back(std::move(j));
    }
    if (events.empty()) fail("trace is empty");
    if (events.back()["type"] != "run_finished") fail("trace ends without run_finished");
    return events;
}

namespace {

std::string text_or(const json& j, const char* key, const std::string& fallback = "") {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
}

}  // namespace

std::string describe_event(const json& j) {
    const auto type = j.value("type", std::string("?"));
    std::ostringstream out;
    if (j.contains("step") && !j["step"].is_null()) out << "[step " << j["step"].dump() << "] ";
    if (type == "run_started") {
        out << "run " << text_or(j, "run_id") << ": " << text_or(j, "instruction");
        if (auto hint = text_or(j, "app_hint"); !hint.empty()) out << " (app " << hint << ")";
    } else if (type == "step_started") {
        out << "screenshot " << text_or(j, "screenshot");
    } else if (type == "operator_output") {
        const auto& o = j["output"];
        out << "operator: " << text_or(o, "action_text") << " -- " << text_or(o, "description");
        if (j["confidence"].is_object()) out << " (confidence " << j["confidence"]["value"].dump() << ")";
    } else if (type == "confidence_gated") {
        out << "gate: confidence " << text_or(j, "confidence", "n/a") << " vs theta " << text_or(j, "theta") << " -> "
            << (j["reflect"].get<bool>() ? "reflect" : "skip");
    } else if (type == "action_executed") {
        out << "executed: " << text_or(j, "outcome");
        if (auto d = text_or(j, "detail"); !d.empty()) out << " (" << d << ")";
        if (j.contains("changed_regions")) out << ", " << j["changed_regions"].size() << " changed region(s)";
    } else if (type == "reflection") {
        const auto& f = j["feedback"];
        out << text_or(f, "level") << " reflection: " << text_or(f, "verdict");
        if (auto e = text_or(f, "explanation"); !e.empty()) out << " -- " << e;
        if (auto s = text_or(f, "suggestion"); !s.empty()) out << " [suggestion: " << s << "]";
    } else if (type == "terminate_intercepted") {
        out << "terminate(" << text_or(j, "status") << "): verdict " << text_or(j, "verdict") << ", "
            << (j["accepted"].get<bool>() ? "accepted" : "rejected");
    } else if (type == "progress_updated") {
        out << "progress: " << text_or(j["progress"], "summary");
    } else if (type == "run_finished") {
        out << "finished: " << text_or(j, "status") << " after " << j["steps"].dump() << " step(s)";
        if (auto a = text_or(j, "answer"); !a.empty()) out << ", answer " << a;
    } else if (type == "warning") {
        out << "warning: " << text_or(j, "text");
    } else {
        out << type;
    }
    return out.str();
}

}  // namespace mobileuse
