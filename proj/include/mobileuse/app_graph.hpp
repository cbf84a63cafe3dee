#pragma once

// Declarative model of a simulated device. World files are JSON documents:
//
//   {
//     "device":   {"width": 1080, "height": 2400},            (optional)
//     "apps":     [{"name": "Files", "home": "files_list", "package": "com.example.files"}],
//     "screens":  [{"id": "files_list", "app": "Files", "background": [245, 245, 245],
//                   "on_swipe": {"up": {"target": "files_more"}},
//                   "on_key":   {"Enter": {"target": "...", "set": {"var": "value"}}}}],
//     "elements": [{"id": "rename", "screen": "files_list", "bounds": [x, y, w, h],
//                   "label": "Rename {{name}}", "kind": "button",
//                   "on_click": {"target": "rename_dialog"},
//                   "on_long_press": {...}, "on_swipe": {"left": {...}},
//                   "binding": "filename"}],
//     "state":    {"filename": "untitled.txt", "starred": false},
//     "tasks":    [{"id": "rename_file", "instruction": "...", "difficulty": "easy",
//                   "initial_state": {...}, "success": [{"var": "filename", "equals": "report.txt"},
//                                                        {"answer": "3"}],
//                   "failure_label": "interaction", "policy": {...}}]
//   }
//
// Element kinds: button, text_field, list_item, toggle, static. Text fields
// and toggles bind a state variable; labels may reference variables with
// {{name}}. Unknown keys anywhere are rejected.

#include <mobileuse/perception.hpp>
#include <mobileuse/types.hpp>

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mobileuse {

using StateValue = std::variant<std::string, bool>;
using StateMap = std::map<std::string, StateValue>;

std::string state_value_text(const StateValue& v);

struct Color {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Color&) const = default;
};

struct Transition {
    std::optional<std::string> target;  // absent: stay on the current screen
    StateMap set;
};

enum class ElementKind { button, text_field, list_item, toggle, static_text };
std::string_view to_string(ElementKind kind) noexcept;

struct Element {
    std::string id;
    std::string screen;
    BoundingBox bounds;
    std::string label;
    ElementKind kind = ElementKind::button;
    std::optional<Transition> on_click;
    std::optional<Transition> on_long_press;
    std::map<std::string, Transition> on_swipe;  // "up" | "down" | "left" | "right"
    std::optional<std::string> binding;
};

struct Screen {
    std::string id;
    std::string app;
    Color background{245, 245, 245};
    std::vector<Element> elements;  // later elements draw on top
    std::map<std::string, Transition> on_swipe;
    std::map<std::string, Transition> on_key;  // key names and Back/Home/Menu/Enter
};

struct AppSpec {
    std::string name;
    std::string home;
    std::optional<std::string> package;
};

enum class Difficulty { easy, medium, hard };
std::string_view to_string(Difficulty d) noexcept;
std::optional<Difficulty> parse_difficulty(std::string_view s) noexcept;

struct SuccessCondition {
    std::optional<std::string> var;
    std::optional<StateValue> equals;
    std::optional<std::string> answer;
};

struct SimTask {
    std::string id;
    std::string instruction;
    Difficulty difficulty = Difficulty::easy;
    StateMap initial_state;
    std::vector<SuccessCondition> success;  // all must hold
    std::optional<FailureType> failure_label;
    nlohmann::json policy;  // scripted-agent description used by the bench; null if absent
};

struct AppGraph {
    int width = 1080;
    int height = 2400;
    std::vector<AppSpec> apps;
    std::map<std::string, Screen> screens;
    StateMap state;
    std::vector<SimTask> tasks;

    const AppSpec* find_app(std::string_view name) const;  // case-insensitive
    const SimTask* find_task(std::string_view id) const;
};

inline constexpr const char* kLauncherScreen = "launcher";

// Throws Error{schema_error} naming the offending key or reference.
AppGraph parse_app_graph(const std::string& json_text);
AppGraph load_app_graph(const std::string& path);

// Pure predicate over final state and the run's answer.
bool check_success(const SimTask& task, const StateMap& state, const std::optional<std::string>& answer);
bool check_success(const SimTask& task, const StateMap& state, const RunResult& result);

}  // namespace mobileuse
