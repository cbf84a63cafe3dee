#include <mobileuse/error.hpp>
#include <mobileuse/templates.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mobileuse {

namespace {

constexpr std::string_view kOperator = R"([system]
You are the Operator of a mobile phone agent. You see the current screenshot of an
Android phone and decide the single next action that moves the task forward.

Available actions (one JSON object per reply, keys exactly as shown):
{"action_type": "key", "text": "<key name, e.g. volume_up>"}
{"action_type": "click", "coordinate": [x, y]}
{"action_type": "long_press", "coordinate": [x, y], "time": <seconds>}
{"action_type": "swipe", "coordinate": [x1, y1], "coordinate2": [x2, y2]}
{"action_type": "type", "text": "<text to input into the focused field>"}
{"action_type": "clear_text"}
{"action_type": "system_button", "button": "Back" | "Home" | "Menu" | "Enter"}
{"action_type": "open", "text": "<app name>"}
{"action_type": "wait", "time": <seconds>}
{"action_type": "take_note", "text": "<fact worth remembering>"}
{"action_type": "answer", "text": "<answer to the user's question>"}
{"action_type": "terminate", "status": "success" | "failure"}

Coordinates are screen pixels with the origin at the top-left corner.
Reply with exactly three lines:
Thought: <your reasoning>
Action: <one action JSON object on a single line>
Description: <one sentence describing the action>
[user]
Instruction: {{instruction}}

Relevant knowledge:
{{knowledge}}

Progress so far:
{{progress}}

Recent actions:
{{history}}

Feedback on the previous step:
{{feedback}}

{{images}}
)";

constexpr std::string_view kExplorer = R"([system]
You are exploring a mobile app on an Android phone to learn how it works. There is no
user task. Visit screens you have not seen, try the controls, and avoid repeating
yourself. Do not change important data irreversibly.

Available actions (one JSON object per reply, keys exactly as shown):
{"action_type": "click", "coordinate": [x, y]}
{"action_type": "long_press", "coordinate": [x, y], "time": <seconds>}
{"action_type": "swipe", "coordinate": [x1, y1], "coordinate2": [x2, y2]}
{"action_type": "type", "text": "<text>"}
{"action_type": "clear_text"}
{"action_type": "system_button", "button": "Back" | "Home" | "Menu" | "Enter"}
{"action_type": "open", "text": "<app name>"}
{"action_type": "wait", "time": <seconds>}
{"action_type": "terminate", "status": "success"}

Reply with exactly three lines:
Thought: <your reasoning>
Action: <one action JSON object on a single line>
Description: <one sentence describing the action>
[user]
Goal: {{instruction}}

Guidance from the critic:
{{guidance}}

Progress so far:
{{progress}}

Recent actions:
{{history}}

Feedback on the previous step:
{{feedback}}

{{images}}
)";

constexpr std::string_view kProgressor = R"([system]
You keep a short running summary of what a phone agent has done so far and what
remains. Write plain sentences. Do not invent actions that were not taken.
Reply with one line:
Progress: <updated summary>
[user]
Previous summary:
{{progress}}

Earlier actions:
{{history}}

Latest action:
{{action}}

Reflection on the latest step:
{{feedback}}
)";

constexpr std::string_view kActionReflector = R"([system]
You check whether a single action on an Android phone had its intended effect. You
get the screenshot before the action and the screenshot after it, where changed
regions are outlined in red.
Reply in this format:
VERDICT: OK or VERDICT: ERROR
<one or two sentences explaining what happened>
Suggestion: <how to fix it, only when the verdict is ERROR>
[user]
Instruction: {{instruction}}

Action taken:
{{action}}

{{images}}
)";

constexpr std::string_view kTrajectoryReflector = R"([system]
You review the last few steps of a phone agent and decide whether it is stuck,
looping, or drifting away from the task.
Reply in this format:
VERDICT: OK or VERDICT: ERROR
<explanation of the problem in the recent steps>
Suggestion: <a different strategy to try, only when the verdict is ERROR>
[user]
Instruction: {{instruction}}

Progress so far:
{{progress}}

Recent steps with step-level feedback:
{{history}}
)";

constexpr std::string_view kGlobalReflector = R"([system]
The phone agent wants to end the task. Decide from the whole history and the last
screenshots whether every part of the instruction has really been completed.
Reply in this format:
VERDICT: OK or VERDICT: INCOMPLETE
<which requirement is still missing, when INCOMPLETE>
Suggestion: <what to do next, optional>
[user]
Instruction: {{instruction}}

Steps taken:
{{history}}

{{images}}
)";

constexpr std::string_view kSummary = R"([system]
You turn a short exploration trajectory in a mobile app into reusable knowledge for
future tasks. Each item should be general and useful beyond this one trajectory, for
example where a feature lives or how a control behaves.
Reply with one item per line, each starting with "- ". Reply NONE if nothing useful
was learned.
[user]
App: {{app}}

Trajectory:
{{history}}

{{images}}
)";

constexpr std::string_view kCritic = R"([system]
You guide the exploration of a mobile app. Given the current screen and what has
already been learned, suggest the next thing to explore that is not yet covered.
Reply with one short sentence of guidance.
[user]
App: {{app}}

Knowledge gathered so far:
{{knowledge}}

{{images}}
)";

std::string trim_newlines(std::string s) {
    while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.erase(s.begin());
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

std::set<std::string> scan_slots(std::string_view text) {
    std::set<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string_view::npos) {
        const auto close = text.find("}}", pos + 2);
        if (close == std::string_view::npos) throw Error(Errc::schema_error, "unterminated slot");
        out.emplace(text.substr(pos + 2, close - pos - 2));
        pos = close + 2;
    }
    return out;
}

}  // namespace

std::string_view to_string(AgentRole role) noexcept {
    switch (role) {
        case AgentRole::operator_agent: return "operator";
        case AgentRole::explorer: return "explorer";
        case AgentRole::progressor: return "progressor";
        case AgentRole::action_reflector: return "action_reflector";
        case AgentRole::trajectory_reflector: return "trajectory_reflector";
        case AgentRole::global_reflector: return "global_reflector";
        case AgentRole::summary: return "summary";
        case AgentRole::critic: return "critic";
    }
    return "operator";
}

const std::vector<AgentRole>& all_agent_roles() {
    static const std::vector<AgentRole> roles{
        AgentRole::operator_agent,       AgentRole::explorer,         AgentRole::progressor,
        AgentRole::action_reflector,     AgentRole::trajectory_reflector,
        AgentRole::global_reflector,     AgentRole::summary,          AgentRole::critic,
    };
    return roles;
}

const std::set<std::string>& allowed_slots(AgentRole role) {
    static const std::map<AgentRole, std::set<std::string>> table{
        {AgentRole::operator_agent, {"instruction", "knowledge", "progress", "history", "feedback", "images"}},
        {AgentRole::explorer, {"instruction", "guidance", "progress", "history", "feedback", "images"}},
        {AgentRole::progressor, {"instruction", "progress", "history", "action", "feedback"}},
        {AgentRole::action_reflector, {"instruction", "action", "images"}},
        {AgentRole::trajectory_reflector, {"instruction", "progress", "history"}},
        {AgentRole::global_reflector, {"instruction", "history", "images"}},
        {AgentRole::summary, {"app", "history", "images"}},
        {AgentRole::critic, {"app", "knowledge", "images"}},
    };
    return table.at(role);
}

PromptTemplate PromptTemplate::parse(AgentRole role, std::string_view text) {
    const auto sys = text.find("[system]");
    const auto usr = text.find("[user]");
    if (sys == std::string_view::npos || usr == std::string_view::npos || usr < sys) {
        throw Error(Errc::schema_error,
                    std::string(to_string(role)) + " template needs a [system] section followed by [user]");
    }
    PromptTemplate t;
    t.role = role;
    t.system_text = trim_newlines(std::string(text.substr(sys + 8, usr - sys - 8)));
    t.user_layout = trim_newlines(std::string(text.substr(usr + 6)));
    if (!scan_slots(t.system_text).empty()) {
        throw Error(Errc::schema_error, std::string(to_string(role)) + " template: slots are not allowed in [system]");
    }
    const auto& allowed = allowed_slots(role);
    for (const auto& slot : t.referenced_slots()) {
        if (!allowed.count(slot)) {
            throw Error(Errc::schema_error,
                        std::string(to_string(role)) + " template references unknown slot {{" + slot + "}}");
        }
    }
    return t;
}

std::set<std::string> PromptTemplate::referenced_slots() const { return scan_slots(user_layout); }

std::string PromptTemplate::render_user(const std::map<std::string, std::string>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = user_layout.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = user_layout.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(user_layout, pos, open - pos);
        const auto it = values.find(user_layout.substr(open + 2, close - open - 2));
        if (it != values.end()) out += it->second;
        pos = close + 2;
    }
    out.append(user_layout, pos);
    return out;
}

std::string_view TemplateCatalog::default_text(AgentRole role) {
    switch (role) {
        case AgentRole::operator_agent: return kOperator;
        case AgentRole::explorer: return kExplorer;
        case AgentRole::progressor: return kProgressor;
        case AgentRole::action_reflector: return kActionReflector;
        case AgentRole::trajectory_reflector: return kTrajectoryReflector;
        case AgentRole::global_reflector: return kGlobalReflector;
        case AgentRole::summary: return kSummary;
        case AgentRole::critic: return kCritic;
    }
    return kOperator;
}

TemplateCatalog::TemplateCatalog() {
    for (auto role : all_agent_roles()) templates_[role] = PromptTemplate::parse(role, default_text(role));
}

TemplateCatalog TemplateCatalog::from_directory(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(Errc::invalid_argument, "template directory not found: " + dir);
    TemplateCatalog catalog;
    for (auto role : all_agent_roles()) {
        const auto path = fs::path(dir) / (std::string(to_string(role)) + ".txt");
        if (!fs::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        catalog.set(PromptTemplate::parse(role, ss.str()));
    }
    return catalog;
}

const PromptTemplate& TemplateCatalog::get(AgentRole role) const { return templates_.at(role); }

void TemplateCatalog::set(PromptTemplate tmpl) { templates_[tmpl.role] = std::move(tmpl); }

}  // namespace mobileuse
