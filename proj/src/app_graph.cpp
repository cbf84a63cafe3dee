#include <mobileuse/app_graph.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace mobileuse {

using nlohmann::json;

namespace {

[[noreturn]] void schema_fail(const std::string& where, const std::string& what) {
    throw Error(Errc::schema_error, "world " + where + ": " + what);
}

void allow_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) schema_fail(where, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            schema_fail(where, "unknown key '" + it.key() + "'");
        }
    }
}

std::string req_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_string()) schema_fail(where, std::string("'") + key + "' must be a string");
    return obj[key].get<std::string>();
}

StateValue parse_value(const json& v, const std::string& where) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    schema_fail(where, "state values must be strings or booleans");
}

StateMap parse_state(const json& obj, const std::string& where) {
    if (!obj.is_object()) schema_fail(where, "expected an object of state values");
    StateMap out;
    for (auto it = obj.begin(); it != obj.end(); ++it) out[it.key()] = parse_value(it.value(), where + "." + it.key());
    return out;
}

Transition parse_transition(const json& obj, const std::string& where) {
    allow_keys(obj, {"target", "set"}, where);
    Transition t;
    if (obj.contains("target")) t.target = req_string(obj, "target", where);
    if (obj.contains("set")) t.set = parse_state(obj["set"], where + ".set");
    return t;
}

std::map<std::string, Transition> parse_transition_map(const json& obj, const std::string& where,
                                                       const std::set<std::string>* allowed_keys) {
    if (!obj.is_object()) schema_fail(where, "expected an object");
    std::map<std::string, Transition> out;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed_keys && !allowed_keys->count(it.key())) schema_fail(where, "unknown direction '" + it.key() + "'");
        out[it.key()] = parse_transition(it.value(), where + "." + it.key());
    }
    return out;
}

const std::set<std::string> kDirections = {"up", "down", "left", "right"};

Color parse_color(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) schema_fail(where, "color must be [r, g, b]");
    Color c;
    std::uint8_t* slots[] = {&c.r, &c.g, &c.b};
    for (int i = 0; i < 3; ++i) {
        if (!v[i].is_number_integer() || v[i].get<int>() < 0 || v[i].get<int>() > 255) {
            schema_fail(where, "color channels must be integers in 0..255");
        }
        *slots[i] = static_cast<std::uint8_t>(v[i].get<int>());
    }
    return c;
}

std::optional<ElementKind> parse_kind(std::string_view s) {
    if (s == "button") return ElementKind::button;
    if (s == "text_field") return ElementKind::text_field;
    if (s == "list_item") return ElementKind::list_item;
    if (s == "toggle") return ElementKind::toggle;
    if (s == "static") return ElementKind::static_text;
    return std::nullopt;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void check_target(const AppGraph& g, const std::optional<Transition>& t, const std::string& where) {
    if (t && t->target && !g.screens.count(*t->target)) schema_fail(where, "unknown target screen '" + *t->target + "'");
}

void check_targets(const AppGraph& g, const std::map<std::string, Transition>& m, const std::string& where) {
    for (const auto& [k, t] : m) check_target(g, t, where + "." + k);
}

// Default launcher: one button per app, stacked vertically.
Screen make_launcher(const AppGraph& g) {
    Screen s;
    s.id = kLauncherScreen;
    s.background = Color{32, 33, 36};
    const int margin = g.width / 12;
    const int h = std::max(24, g.height / 16);
    int y = g.height / 8;
    for (const auto& app : g.apps) {
        if (y + h > g.height) break;
        Element e;
        e.id = "launch_" + lower(app.name);
        e.screen = s.id;
        e.bounds = BoundingBox{margin, y, g.width - 2 * margin, h};
        e.label = app.name;
        e.kind = ElementKind::button;
        e.on_click = Transition{app.home, {}};
        s.elements.push_back(std::move(e));
        y += h + h / 2;
    }
    return s;
}

}  // namespace

std::string state_value_text(const StateValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    return std::get<std::string>(v);
}

std::string_view to_string(ElementKind kind) noexcept {
    switch (kind) {
        case ElementKind::button: return "button";
        case ElementKind::text_field: return "text_field";
        case ElementKind::list_item: return "list_item";
        case ElementKind::toggle: return "toggle";
        case ElementKind::static_text: return "static";
    }
    return "button";
}

std::string_view to_string(Difficulty d) noexcept {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::medium: return "medium";
        case Difficulty::hard: return "hard";
    }
    return "easy";
}

std::optional<Difficulty> parse_difficulty(std::string_view s) noexcept {
    if (s == "easy") return Difficulty::easy;
    if (s == "medium") return Difficulty::medium;
    if (s == "hard") return Difficulty::hard;
    return std::nullopt;
}

const AppSpec* AppGraph::find_app(std::string_view name) const {
    const auto wanted = lower(name);
    for (const auto& a : apps) {
        if (lower(a.name) == wanted) return &a;
    }
    return nullptr;
}

const SimTask* AppGraph::find_task(std::string_view id) const {
    for (const auto& t : tasks) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

AppGraph parse_app_graph(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::schema_error, std::string("world: invalid JSON: ") + e.what());
    }
    allow_keys(root, {"device", "apps", "screens", "elements", "state", "tasks"}, "root");

    AppGraph g;
    if (root.contains("device")) {
        const auto& d = root["device"];
        allow_keys(d, {"width", "height"}, "device");
        g.width = d.value("width", g.width);
        g.height = d.value("height", g.height);
        if (g.width <= 0 || g.height <= 0) schema_fail("device", "dimensions must be positive");
    }

    if (!root.contains("apps") || !root["apps"].is_array() || root["apps"].empty()) {
        schema_fail("apps", "at least one app is required");
    }
    for (std::size_t i = 0; i < root["apps"].size(); ++i) {
        const auto& a = root["apps"][i];
        const std::string where = "apps[" + std::to_string(i) + "]";
        allow_keys(a, {"name", "home", "package"}, where);
        AppSpec app{req_string(a, "name", where), req_string(a, "home", where), std::nullopt};
        if (a.contains("package")) app.package = req_string(a, "package", where);
        if (g.find_app(app.name)) schema_fail(where, "duplicate app '" + app.name + "'");
        g.apps.push_back(std::move(app));
    }

    if (root.contains("screens")) {
        if (!root["screens"].is_array()) schema_fail("screens", "expected an array");
        for (std::size_t i = 0; i < root["screens"].size(); ++i) {
            const auto& s = root["screens"][i];
            const std::string where = "screens[" + std::to_string(i) + "]";
            allow_keys(s, {"id", "app", "background", "on_swipe", "on_key"}, where);
            Screen screen;
            screen.id = req_string(s, "id", where);
            screen.app = req_string(s, "app", where);
            if (!g.find_app(screen.app)) schema_fail(where, "unknown app '" + screen.app + "'");
            if (s.contains("background")) screen.background = parse_color(s["background"], where + ".background");
            if (s.contains("on_swipe")) screen.on_swipe = parse_transition_map(s["on_swipe"], where + ".on_swipe", &kDirections);
            if (s.contains("on_key")) screen.on_key = parse_transition_map(s["on_key"], where + ".on_key", nullptr);
            if (g.screens.count(screen.id)) schema_fail(where, "duplicate screen id '" + screen.id + "'");
            g.screens[screen.id] = std::move(screen);
        }
    }

    if (root.contains("elements")) {
        if (!root["elements"].is_array()) schema_fail("elements", "expected an array");
        std::set<std::pair<std::string, std::string>> ids;
        for (std::size_t i = 0; i < root["elements"].size(); ++i) {
            const auto& e = root["elements"][i];
            const std::string where = "elements[" + std::to_string(i) + "]";
            allow_keys(e, {"id", "screen", "bounds", "label", "kind", "on_click", "on_long_press", "on_swipe", "binding"},
                       where);
            Element el;
            el.id = req_string(e, "id", where);
            el.screen = req_string(e, "screen", where);
            auto sit = g.screens.find(el.screen);
            if (sit == g.screens.end()) schema_fail(where, "unknown screen '" + el.screen + "'");
            if (!ids.emplace(el.screen, el.id).second) schema_fail(where, "duplicate element id '" + el.id + "'");
            const auto& b = e.value("bounds", json());
            if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number_integer(); })) {
                schema_fail(where, "bounds must be [x, y, width, height]");
            }
            el.bounds = BoundingBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
            if (el.bounds.width < 1 || el.bounds.height < 1 || el.bounds.x < 0 || el.bounds.y < 0 ||
                el.bounds.x + el.bounds.width > g.width || el.bounds.y + el.bounds.height > g.height) {
                schema_fail(where, "bounds lie outside the screen");
            }
            el.label = e.value("label", "");
            const auto kind = parse_kind(e.value("kind", "button"));
            if (!kind) schema_fail(where, "unknown kind '" + e.value("kind", "") + "'");
            el.kind = *kind;
            if (e.contains("on_click")) el.on_click = parse_transition(e["on_click"], where + ".on_click");
            if (e.contains("on_long_press")) el.on_long_press = parse_transition(e["on_long_press"], where + ".on_long_press");
            if (e.contains("on_swipe")) el.on_swipe = parse_transition_map(e["on_swipe"], where + ".on_swipe", &kDirections);
            if (e.contains("binding")) el.binding = req_string(e, "binding", where);
            if ((el.kind == ElementKind::text_field || el.kind == ElementKind::toggle) && !el.binding) {
                schema_fail(where, "text_field and toggle elements need a binding");
            }
            sit->second.elements.push_back(std::move(el));
        }
    }

    if (root.contains("state")) g.state = parse_state(root["state"], "state");

    for (const auto& app : g.apps) {
        auto it = g.screens.find(app.home);
        if (it == g.screens.end()) schema_fail("apps", "home screen '" + app.home + "' of " + app.name + " does not exist");
        if (it->second.app != app.name) schema_fail("apps", "home screen '" + app.home + "' belongs to another app");
    }
    if (!g.screens.count(kLauncherScreen)) g.screens[kLauncherScreen] = make_launcher(g);

    for (const auto& [id, screen] : g.screens) {
        const std::string where = "screen '" + id + "'";
        check_targets(g, screen.on_swipe, where + ".on_swipe");
        check_targets(g, screen.on_key, where + ".on_key");
        for (const auto& el : screen.elements) {
            const std::string ew = where + " element '" + el.id + "'";
            check_target(g, el.on_click, ew + ".on_click");
            check_target(g, el.on_long_press, ew + ".on_long_press");
            check_targets(g, el.on_swipe, ew + ".on_swipe");
        }
    }

    if (root.contains("tasks")) {
        if (!root["tasks"].is_array()) schema_fail("tasks", "expected an array");
        for (std::size_t i = 0; i < root["tasks"].size(); ++i) {
            const auto& t = root["tasks"][i];
            const std::string where = "tasks[" + std::to_string(i) + "]";
            allow_keys(t, {"id", "instruction", "difficulty", "initial_state", "success", "failure_label", "policy"}, where);
            SimTask task;
            task.id = req_string(t, "id", where);
            task.instruction = req_string(t, "instruction", where);
            const auto diff = parse_difficulty(t.value("difficulty", "easy"));
            if (!diff) schema_fail(where, "difficulty must be easy, medium or hard");
            task.difficulty = *diff;
            if (t.contains("initial_state")) task.initial_state = parse_state(t["initial_state"], where + ".initial_state");
            if (t.contains("success")) {
                if (!t["success"].is_array()) schema_fail(where, "success must be an array of conditions");
                for (const auto& c : t["success"]) {
                    allow_keys(c, {"var", "equals", "answer"}, where + ".success");
                    SuccessCondition cond;
                    if (c.contains("var")) {
                        cond.var = req_string(c, "var", where + ".success");
                        if (!c.contains("equals")) schema_fail(where, "var condition needs 'equals'");
                        cond.equals = parse_value(c["equals"], where + ".success");
                    } else if (c.contains("answer")) {
                        cond.answer = req_string(c, "answer", where + ".success");
                    } else {
                        schema_fail(where, "condition needs 'var' or 'answer'");
                    }
                    task.success.push_back(std::move(cond));
                }
            }
            if (t.contains("failure_label")) {
                const auto label = parse_failure_type(req_string(t, "failure_label", where));
                if (!label) schema_fail(where, "unknown failure_label");
                task.failure_label = *label;
            }
            if (t.contains("policy")) task.policy = t["policy"];
            if (g.find_task(task.id)) schema_fail(where, "duplicate task id '" + task.id + "'");
            g.tasks.push_back(std::move(task));
        }
    }
    return g;
}

AppGraph load_app_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::invalid_argument, "cannot open world file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_app_graph(buf.str());
}

namespace {

// Answers compare trimmed and case-insensitively.
std::string normalized_answer(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out;
    for (char c : s.substr(b, e - b + 1)) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

bool check_success(const SimTask& task, const StateMap& state, const std::optional<std::string>& answer) {
    for (const auto& c : task.success) {
        if (c.var) {
            auto it = state.find(*c.var);
            if (it == state.end() || !c.equals || it->second != *c.equals) return false;
        } else if (c.answer) {
            if (!answer || normalized_answer(*answer) != normalized_answer(*c.answer)) return false;
        }
    }
    return true;
}

bool check_success(const SimTask& task, const StateMap& state, const RunResult& result) {
    return check_success(task, state, result.answer);
}

}  // namespace mobileuse
